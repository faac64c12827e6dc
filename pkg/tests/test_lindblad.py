import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cohentropy import (
    DensityMatrix,
    ExpansionInvalid,
    HermitianObservable,
    HorizonExceeded,
    MissingRate,
    asymptotic_state,
    build_collective_generator,
    build_generator,
    build_level_structure,
    dephase_block_diagonal,
    dephase_diagonal,
    eigenoperators,
    evolve,
    flat_bath,
    short_time_state,
    steady_states,
    thermal_state_of,
)
from cohentropy.lindblad import BathSpectrum, stationary_kernel_dimension
from conftest import SX, random_density


class TestBathSpectrum:
    def test_kms_condition(self):
        bath = flat_bath(0.4, 1.7)
        for w in (0.5, 1.0, 3.0):
            assert bath.G(-w) == pytest.approx(bath.G(w) * math.exp(-w * 1.7), rel=1e-14)

    def test_missing_rate(self):
        def partial(w):
            if w > 0.5:
                raise KeyError(w)
            return 0.1

        bath = BathSpectrum(beta_B=1.0, g_half=partial)
        with pytest.raises(MissingRate):
            bath.G(1.0)

    def test_negative_rate_rejected(self):
        bath = BathSpectrum(beta_B=1.0, g_half=lambda w: -0.1)
        with pytest.raises(MissingRate):
            bath.G(1.0)


class TestEigenoperators:
    def test_qubit_ladder(self, qubit_system):
        els, _ = qubit_system
        jumps = eigenoperators(HermitianObservable(SX), els)
        assert jumps.frequencies == (-1.0, 1.0)
        lowering = dict(zip(jumps.frequencies, jumps.operators))[1.0]
        expect = np.zeros((2, 2), dtype=complex)
        expect[0, 1] = 1.0  # |g><e|
        assert np.allclose(lowering, expect, atol=1e-14)

    def test_degenerate_transition_elements(self, two_qubit_collective):
        # both one-excitation states connect to the ground state, and A A^dag
        # carries a coherence between them
        _, system, els, _ = two_qubit_collective
        jumps = eigenoperators(system.A_S, els)
        a = dict(zip(jumps.frequencies, jumps.operators))[1.0]
        ground = np.zeros(4)
        ground[0] = 1.0
        one_exc = [np.eye(4)[1], np.eye(4)[2]]
        for state in one_exc:
            assert abs(ground @ a @ state) > 0.5
        aad = a @ a.conj().T
        assert abs(one_exc[0] @ aad @ one_exc[1]) > 0.5

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_completeness(self, seed):
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a_s = HermitianObservable(0.5 * (g + g.conj().T))
        els = build_level_structure(HermitianObservable(np.diag([0.0, 1.0, 1.0, 2.0])))
        jumps = eigenoperators(a_s, els)
        total = sum(jumps.operators)
        assert np.max(np.abs(total - a_s.elements)) < 1e-12

    def test_mirror_property(self, two_qubit_collective):
        _, system, els, _ = two_qubit_collective
        jumps = eigenoperators(system.A_S, els)
        ops = dict(zip(jumps.frequencies, jumps.operators))
        for w in jumps.frequencies:
            assert np.allclose(ops[-w], ops[w].conj().T, atol=1e-13)

    def test_zero_frequency_dephasing_component(self):
        """A_S with a block-diagonal part yields a Hermitian A(0)."""
        els = build_level_structure(HermitianObservable(np.diag([0.0, 1.0, 1.0])))
        a_s = np.zeros((3, 3), dtype=complex)
        a_s[0, 1] = a_s[1, 0] = 1.0   # transition component
        a_s[1, 2] = a_s[2, 1] = 0.5   # inside the degenerate level
        a_s[0, 0] = 0.3
        jumps = eigenoperators(HermitianObservable(a_s), els)
        assert 0.0 in jumps.frequencies
        a0 = dict(zip(jumps.frequencies, jumps.operators))[0.0]
        assert np.allclose(a0, a0.conj().T, atol=1e-14)
        assert abs(a0[1, 2]) > 0.4 and abs(a0[0, 0] - 0.3) < 1e-14
        assert abs(a0[0, 1]) < 1e-14


class TestBuildGenerator:
    def test_thermal_stationarity(self, two_qubit_collective):
        _, _, els, gen = two_qubit_collective
        rho_th = thermal_state_of(els, 1.0)
        assert np.max(np.abs(gen.apply(rho_th))) < 1e-10

    def test_two_level_rate_equation(self, qubit_system):
        """Closed-form 2x2 oracle: dp_e/dt = -G p_e + G e^(-w b) p_g."""
        els, gen = qubit_system
        gamma, beta = 0.1, 1.0
        g_down, g_up = gamma, gamma * math.exp(-beta)
        r = g_down + g_up
        p_inf = g_up / r
        rho0 = DensityMatrix(np.diag([0.3, 0.7]), ("g", "e"))
        for t in (0.5, 2.0, 10.0):
            state = evolve(gen, rho0, [t])[0]
            expect = p_inf + (0.7 - p_inf) * math.exp(-r * t)
            assert state.elements[1, 1].real == pytest.approx(expect, abs=1e-12)
        steady = asymptotic_state(gen, rho0)
        ratio = steady.elements[1, 1].real / steady.elements[0, 0].real
        assert ratio == pytest.approx(math.exp(-beta), abs=1e-10)

    def test_identity_coupling_gives_zero_generator(self):
        els = build_level_structure(HermitianObservable(np.diag([0.0, 1.0, 1.0])))
        jumps = eigenoperators(HermitianObservable(np.eye(3)), els)
        gen = build_generator(jumps, flat_bath(0.3, 1.0))
        assert np.max(np.abs(gen.superoperator)) < 1e-14

    def test_lamb_shift_preserves_stationarity(self, two_qubit_collective):
        _, system, els, _ = two_qubit_collective
        bath = BathSpectrum(beta_B=1.0, g_half=lambda w: 0.05, lamb_shift=lambda w: 0.02 * w)
        gen = build_collective_generator(system.A_S, els, bath)
        assert np.max(np.abs(gen.apply(thermal_state_of(els, 1.0)))) < 1e-10


class TestEvolve:
    def test_time_zero_is_exact(self, qubit_system):
        _, gen = qubit_system
        rho0 = DensityMatrix(random_density(2, 3), ("g", "e"))
        out = evolve(gen, rho0, [0.0])[0]
        assert out is rho0

    def test_stationary_trajectory(self, two_qubit_collective):
        _, _, els, gen = two_qubit_collective
        rho_th = thermal_state_of(els, 1.0)
        for state in evolve(gen, rho_th, [0.1, 1.0, 50.0]):
            assert np.max(np.abs(state.elements - rho_th.elements)) < 1e-12

    def test_qubit_coherence_decay_closed_form(self, qubit_system):
        els, gen = qubit_system
        gamma, beta = 0.1, 1.0
        r = gamma * (1 + math.exp(-beta))
        rho0 = DensityMatrix(np.array([[0.6, 0.25], [0.25, 0.4]], dtype=complex), ("g", "e"))
        for t in (0.7, 3.0):
            state = evolve(gen, rho0, [t])[0]
            assert state.elements[0, 1] == pytest.approx(0.25 * math.exp(-r * t / 2), abs=1e-8)

    def test_trace_and_hermiticity_along_trajectory(self, two_qubit_collective):
        _, _, els, gen = two_qubit_collective
        rho0 = DensityMatrix(random_density(4, 17), els.basis_labels)
        for state in evolve(gen, rho0, list(np.geomspace(0.01, 100.0, 20))):
            assert abs(state.elements.trace() - 1.0) < 1e-10
            assert np.max(np.abs(state.elements - state.elements.conj().T)) < 1e-10

    def test_horizon_enforced_in_near_degenerate_mode(self):
        h = HermitianObservable(np.diag([0.0, 1.0, 1.001]))
        els = build_level_structure(h, delta=0.01)
        sx01 = np.zeros((3, 3), dtype=complex)
        sx01[0, 1] = sx01[1, 0] = 1.0
        sx01[0, 2] = sx01[2, 0] = 1.0
        gen = build_collective_generator(HermitianObservable(sx01), els, flat_bath(0.1, 1.0))
        rho0 = thermal_state_of(els, 2.0)
        evolve(gen, rho0, [5.0])  # within 0.1/delta = 10
        with pytest.raises(HorizonExceeded):
            evolve(gen, rho0, [11.0])


class TestShortTimeState:
    def test_time_zero(self, qubit_system):
        _, gen = qubit_system
        rho0 = DensityMatrix(random_density(2, 5), ("g", "e"))
        assert short_time_state(gen, rho0, 0.0) is rho0

    def test_step_too_large(self, qubit_system):
        _, gen = qubit_system
        rho0 = DensityMatrix(np.eye(2) / 2, ("g", "e"))
        with pytest.raises(ExpansionInvalid):
            short_time_state(gen, rho0, 1.0)

    def test_richardson_against_evolve(self, two_qubit_collective):
        """||first-order - exact|| <= C t^2, checked by halving t."""
        _, _, els, gen = two_qubit_collective
        rho0 = thermal_state_of(els, 2.0)
        errors = []
        for t in (0.02, 0.01, 0.005):
            exact = evolve(gen, rho0, [t])[0]
            approx = short_time_state(gen, rho0, t)
            errors.append(np.max(np.abs(exact.elements - approx.elements)))
        assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.15)
        assert errors[1] / errors[2] == pytest.approx(4.0, rel=0.15)

    def test_degenerate_transitions_generate_horizontal_coherence(self, two_qubit_collective):
        _, _, els, gen = two_qubit_collective
        rho0 = thermal_state_of(els, 2.0)  # thermal at beta_0 != beta_B
        t = 0.01 / gen.norm_inf
        state = short_time_state(gen, rho0, t)
        assert abs(rho0.elements[1, 2]) < 1e-15
        assert abs(state.elements[1, 2]) > 1e-7


class TestSteadyStates:
    def test_non_degenerate_qubit_unique_gibbs(self, qubit_system):
        els, gen = qubit_system
        states = steady_states(gen)
        assert len(states) == 1
        assert np.allclose(states[0].elements, thermal_state_of(els, 1.0).elements, atol=1e-9)

    def test_collective_manifold_dimension(self, two_qubit_collective):
        _, _, els, gen = two_qubit_collective
        assert stationary_kernel_dimension(gen) == 2
        rho_th = thermal_state_of(els, 1.0)
        assert np.max(np.abs(gen.apply(rho_th))) < 1e-12
        for state in steady_states(gen):
            assert np.max(np.abs(gen.apply(state))) < 1e-10

    def test_detailed_balance_nondegenerate(self):
        """Stationary populations of a connected ladder obey e^(-beta gap)."""
        h = HermitianObservable(np.diag([0.0, 0.7, 1.8]))
        els = build_level_structure(h)
        coupling = np.zeros((3, 3), dtype=complex)
        coupling[0, 1] = coupling[1, 0] = 1.0
        coupling[1, 2] = coupling[2, 1] = 0.6
        gen = build_collective_generator(HermitianObservable(coupling), els, flat_bath(0.2, 1.1))
        steady = asymptotic_state(gen, DensityMatrix(np.eye(3) / 3))
        p = np.diag(steady.elements).real
        assert p[1] / p[0] == pytest.approx(math.exp(-1.1 * 0.7), abs=1e-8)
        assert p[2] / p[1] == pytest.approx(math.exp(-1.1 * 1.1), abs=1e-8)


class TestCutCommutation:
    def test_block_diagonal_cut_commutes_with_evolution(self, two_qubit_collective):
        """Vertical coherences decouple: BD o exp(tL) = exp(tL) o BD."""
        _, _, els, gen = two_qubit_collective
        rho0 = DensityMatrix(random_density(4, 23), els.basis_labels)
        for dt in (0.1, 1.0):
            left = dephase_block_diagonal(evolve(gen, rho0, [dt])[0], els)
            right = evolve(gen, dephase_block_diagonal(rho0, els), [dt])[0]
            assert np.max(np.abs(left.elements - right.elements)) < 1e-10

    def test_diagonal_cut_does_not_commute(self, two_qubit_collective):
        """Populations couple to horizontal coherences: D o exp(tL) != exp(tL) o D."""
        _, _, els, gen = two_qubit_collective
        base = thermal_state_of(els, 1.1)
        chi = np.zeros((4, 4), dtype=complex)
        chi[1, 2] = chi[2, 1] = 0.15
        rho0 = DensityMatrix(base.elements + chi, els.basis_labels)
        dt = 0.5
        left = dephase_diagonal(evolve(gen, rho0, [dt])[0], els)
        right = evolve(gen, dephase_diagonal(rho0, els), [dt])[0]
        assert np.max(np.abs(left.elements - right.elements)) > 1e-6
