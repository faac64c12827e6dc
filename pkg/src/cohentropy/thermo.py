"""Entropy production, its three-way decomposition, heat flow, complementarity.

All rates are analytic, computed from a single evaluation of L rho through
the integrand identities

    Pi      = -Tr drho [ln rho   - ln rho_th]
    dC_v/dt =  Tr drho [ln rho   - ln rho_BD]
    dC_h/dt =  Tr drho [ln rho_BD - ln rho_D]
    dD_th/dt = Tr drho [ln rho_D - ln rho_th]

so the closure Pi = -dC_v/dt - dC_h/dt - dD_th/dt telescopes exactly.
Centered finite differences of the state functionals are used only as
cross-checks.  Rate fields store the plain time derivatives; the negated
quantities (-dC_h/dt etc.) are the signed contributions to Pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .exceptions import (
    IdentityViolation,
    InvariantViolation,
    NonConvergence,
    ShapeMismatch,
)
from .lindblad import BathSpectrum, LindbladGenerator, build_multichannel_generator, evolve
from .qcore import (
    CLIP_FLOOR,
    DensityMatrix,
    HermitianObservable,
    expectation,
    matrix_log_on_support,
    max_abs,
    null_projector,
    trace_distance,
    von_neumann_entropy,
)
from .spectrum import (
    EnergyLevelStructure,
    build_level_structure,
    coherence_measures,
    dephase_block_diagonal,
    dephase_diagonal,
    thermal_state_of,
)
from .qcore import relative_entropy

RATE_POSITIVITY_TOL = 1e-8
CLOSURE_TOL = 1e-8
FD_RELATIVE_TOL = 1e-4
HEAT_FLOW_TOL = 1e-8

FLAG_PI_DIVERGENT = "pi-divergent"
FLAG_UNDEFINED_TEMPERATURE = "undefined-temperature"
FLAG_NOT_APPLICABLE = "not-applicable"


@dataclass(frozen=True)
class ThermoSnapshot:
    """State functionals and analytic rates at one instant."""

    t: float
    S: float
    C_v: float
    C_h: float
    D_th: float
    E_S: float
    F_D: float
    Pi_rate: float
    Phi_rate: float
    rate_C_v: float
    rate_C_h: float
    rate_D_th: float
    flags: tuple[str, ...] = ()

    @property
    def E_dot(self) -> float:
        """Heat flow Tr(drho H); Phi = beta_B * E_dot."""
        return self._e_dot

    _e_dot: float = field(default=0.0, repr=False)


@dataclass(frozen=True)
class ThermoSeries:
    """Time-ordered snapshots along one trajectory, with the evolved states."""

    snapshots: tuple[ThermoSnapshot, ...]
    els: EnergyLevelStructure
    beta_B: float
    provenance: str = ""
    states: tuple[DensityMatrix, ...] = ()

    def __post_init__(self):
        ts = [s.t for s in self.snapshots]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InvariantViolation("snapshot times must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.snapshots])


def instantaneous_rates(
    gen: LindbladGenerator, rho: DensityMatrix, t: float = 0.0
) -> ThermoSnapshot:
    """Entropy production and decomposition rates at the given state.

    If rho is numerically singular, logs are taken on its support; when the
    drift L rho additionally has weight on the null space the production rate
    is divergent and reported as +inf with a warning flag.
    """
    els = gen.els
    beta_b = gen.bath.beta_B
    rho_dot = gen.apply(rho)
    rho_bd = dephase_block_diagonal(rho, els)
    rho_d = dephase_diagonal(rho, els)
    rho_th = thermal_state_of(els, beta_b)
    h = els.hamiltonian().elements

    log_rho = matrix_log_on_support(rho).elements
    log_bd = matrix_log_on_support(rho_bd).elements
    log_d = matrix_log_on_support(rho_d).elements
    log_th = matrix_log_on_support(rho_th).elements

    def overlap(op: np.ndarray) -> float:
        return float(np.trace(rho_dot @ op).real)

    rate_c_v = overlap(log_rho - log_bd)
    rate_c_h = overlap(log_bd - log_d)
    rate_d_th = overlap(log_d - log_th)
    pi = -overlap(log_rho - log_th)
    e_dot = overlap(h)

    flags: list[str] = []
    nullp = null_projector(rho)
    if max_abs(nullp) > 0.5 and max_abs(nullp @ rho_dot @ nullp) > 1e-12:
        flags.append(FLAG_PI_DIVERGENT)
        pi_out = float("inf")
    else:
        pi_out = pi
        closure = abs(pi + rate_c_v + rate_c_h + rate_d_th)
        if closure > CLOSURE_TOL * max(1.0, abs(pi)):
            raise InvariantViolation(f"decomposition closure violated by {closure:.3e}")
        if pi < -RATE_POSITIVITY_TOL:
            raise InvariantViolation(f"negative entropy production {pi:.3e}")

    s = von_neumann_entropy(rho)
    c_v, c_h = coherence_measures(rho, els)
    d_th = relative_entropy(rho_d, rho_th)
    e_s = expectation(rho, h)
    if beta_b != 0.0:
        f_d = e_s - von_neumann_entropy(rho_d) / beta_b
    else:
        f_d = float("nan")
        flags.append(FLAG_NOT_APPLICABLE)

    return ThermoSnapshot(
        t=float(t),
        S=s,
        C_v=c_v,
        C_h=c_h,
        D_th=d_th,
        E_S=e_s,
        F_D=f_d,
        Pi_rate=pi_out,
        Phi_rate=beta_b * e_dot,
        rate_C_v=rate_c_v,
        rate_C_h=rate_c_h,
        rate_D_th=rate_d_th,
        flags=tuple(flags),
        _e_dot=e_dot,
    )


def decompose_series(
    gen: LindbladGenerator,
    rho0: DensityMatrix,
    times: Sequence[float],
    provenance: str = "",
    cross_validate: bool = True,
) -> ThermoSeries:
    """Evolve rho0 and emit snapshots; cross-check rates by finite differences.

    Rates are cross-validated at interior points against centered differences
    of the state functionals taken at step h with h ||L|| ~ 1e-3 (dedicated
    evaluations at t +- h, not grid neighbors), to relative 1e-4.  Points
    where the state has eigenvalues below 1e-6 are skipped: there the
    functionals are dominated by log-singular transients no fixed-step
    difference can resolve.
    """
    states = evolve(gen, rho0, times)
    snapshots = [instantaneous_rates(gen, s, t) for t, s in zip(times, states)]
    series = ThermoSeries(
        snapshots=tuple(snapshots),
        els=gen.els,
        beta_B=gen.bath.beta_B,
        provenance=provenance,
        states=tuple(states),
    )
    if cross_validate and len(states) >= 3:
        interior = range(1, len(states) - 1)
        picks = [k for k in interior if not snapshots[k].flags][:: max(1, (len(states) - 2) // 12)]
        check_rates_by_finite_differences(gen, [(times[k], states[k], snapshots[k]) for k in picks])
    return series


FD_MINEIG_FLOOR = 1e-6


def check_rates_by_finite_differences(
    gen: LindbladGenerator,
    points: Sequence[tuple[float, DensityMatrix, ThermoSnapshot]],
    raise_on_failure: bool = True,
    rel_tol: float | None = None,
) -> list[str]:
    """Compare analytic rates with centered finite differences at h ||L|| ~ 1e-3.

    Returns the list of failing identity descriptions (empty when all pass).
    """
    rel = FD_RELATIVE_TOL if rel_tol is None else rel_tol
    norm = gen.norm_inf
    h = 1e-3 / max(norm, 1e-12)
    minus = scipy.linalg.expm(-h * gen.superoperator)
    plus = scipy.linalg.expm(h * gen.superoperator)
    atol = 1e-9 * max(1.0, norm)
    failures: list[str] = []
    for t, state, snap in points:
        if t <= h:
            continue
        lam_min = float(np.linalg.eigvalsh(state.elements)[0])
        if lam_min < FD_MINEIG_FLOOR:
            continue
        d = gen.dim
        vec = state.elements.reshape(-1)
        before = _functionals((minus @ vec).reshape(d, d), gen, state.basis_labels)
        after = _functionals((plus @ vec).reshape(d, d), gen, state.basis_labels)
        analytic = {
            "dS/dt = Pi + Phi": snap.Pi_rate + snap.Phi_rate,
            "dC_v/dt": snap.rate_C_v,
            "dC_h/dt": snap.rate_C_h,
            "dD_th/dt": snap.rate_D_th,
        }
        for key in analytic:
            fd = (after[key] - before[key]) / (2 * h)
            an = analytic[key]
            tol = rel * max(abs(fd), abs(an)) + (atol if rel >= 0 else 0.0)
            if abs(fd - an) > tol:
                failures.append(
                    f"{key} at t = {t:.6g}: analytic {an:.6e}, finite difference {fd:.6e}"
                )
    if failures and raise_on_failure:
        raise IdentityViolation("; ".join(failures))
    return failures


def _functionals(matrix: np.ndarray, gen: LindbladGenerator, labels) -> dict[str, float]:
    state = DensityMatrix(_resymm(matrix), labels)
    els = gen.els
    s = von_neumann_entropy(state)
    c_v, c_h = coherence_measures(state, els)
    d_th = relative_entropy(dephase_diagonal(state, els), thermal_state_of(els, gen.bath.beta_B))
    return {"dS/dt = Pi + Phi": s, "dC_v/dt": c_v, "dC_h/dt": c_h, "dD_th/dt": d_th}


@dataclass(frozen=True)
class FrequencyChannel:
    """Per-frequency heat-flow record of the spectral decomposition."""

    omega: float
    occupation_down: float  # <A(w) A(w)^dag>
    occupation_up: float    # <A(w)^dag A(w)>
    T_apparent: float | None
    contribution: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class HeatFlowReport:
    direct: float
    spectral: float
    channels: tuple[FrequencyChannel, ...]


def heat_flow(gen: LindbladGenerator, rho: DensityMatrix) -> HeatFlowReport:
    """Heat flow Tr(L rho H) and its apparent-temperature spectral form.

    The spectral form sums w G(w) <A A^dag> (e^(-w beta_B) - e^(-w/T(w)))
    over positive frequencies, with T(w) = w / ln(<A A^dag> / <A^dag A>).
    Channels where either expectation collapses below the clip floor carry an
    undefined-temperature flag; their contribution falls back to the direct
    rate expression w G(w) (<A A^dag> e^(-w beta_B) - <A^dag A>), which is the
    same quantity written without the temperature.
    """
    if gen.jumps is None:
        raise ShapeMismatch("heat_flow requires a generator with a single jump-operator set")
    h = gen.els.hamiltonian().elements
    direct = float(np.trace(gen.apply(rho) @ h).real)
    channels: list[FrequencyChannel] = []
    beta_b = gen.bath.beta_B
    for w, a in gen.jumps.positive():
        g = gen.bath.G(w)
        down = float(np.trace(rho.elements @ (a @ a.conj().T)).real)
        up = float(np.trace(rho.elements @ (a.conj().T @ a)).real)
        contribution = w * g * (down * math.exp(-w * beta_b) - up)
        if min(down, up) <= CLIP_FLOOR:
            channels.append(
                FrequencyChannel(w, down, up, None, contribution, (FLAG_UNDEFINED_TEMPERATURE,))
            )
            continue
        log_ratio = math.log(down / up)
        t_apparent = w / log_ratio if log_ratio != 0.0 else float("inf")
        channels.append(FrequencyChannel(w, down, up, t_apparent, contribution))
    spectral = float(sum(c.contribution for c in channels))
    if abs(direct - spectral) > HEAT_FLOW_TOL * max(1.0, abs(direct), abs(spectral)):
        raise InvariantViolation(
            f"heat-flow forms disagree: direct {direct:.6e}, spectral {spectral:.6e}"
        )
    return HeatFlowReport(direct=direct, spectral=spectral, channels=tuple(channels))


@dataclass(frozen=True)
class ComplementarityEntry:
    """Checks (i)-(iv) of the coherence/convergence complementarity at one time."""

    t: float
    minus_dCh: float          # -Delta C_h since the initial snapshot
    minus_dDth: float         # -Delta D_th
    weighted_dE: float        # (beta_0 - beta_B) * Delta E_S
    backtrack: float          # S(rho_t|D | rho_0|D)
    sum_nonneg_ok: bool       # (i)   -dC_h - dD_th >= 0
    energy_identity_residual: float
    energy_identity_ok: bool  # (ii)  -dD_th = weighted_dE - backtrack
    reversal_active: bool     # (iii) applies when weighted_dE < 0
    reversal_bound_ok: bool | None
    generation_active: bool   # (iv)  applies when dC_h > 0
    generation_bound_ok: bool | None


@dataclass(frozen=True)
class ComplementarityReport:
    applicable: bool
    beta_0: float | None
    fit_residual: float
    entries: tuple[ComplementarityEntry, ...]
    initial_rate_ok: bool | None  # (v) -dC_h/dt + (beta_0 - beta_B) dE/dt >= 0 at t0
    flags: tuple[str, ...] = ()


def fit_inverse_temperature(
    rho_d: DensityMatrix, els: EnergyLevelStructure
) -> tuple[float, float]:
    """Least-squares beta from ln p against level energies; residual is the
    max elementwise deviation of the refitted thermal state."""
    v = els.basis_vectors
    pops = np.real(np.einsum("ki,kl,li->i", v.conj(), rho_d.elements, v))
    energies = np.concatenate(
        [np.full(l, e) for e, l in zip(els.energies, els.degeneracies)]
    )
    usable = pops > 1e-290
    if usable.sum() < 2:
        return float("nan"), float("inf")
    logs = np.log(pops[usable])
    a = np.vstack([np.ones(usable.sum()), -energies[usable]]).T
    coef, *_ = np.linalg.lstsq(a, logs, rcond=None)
    beta0 = float(coef[1])
    residual = max_abs(rho_d.elements - thermal_state_of(els, beta0).elements)
    return beta0, residual


def complementarity_report(
    series: ThermoSeries, tol: float = 1e-8, fit_tol: float = 1e-9
) -> ComplementarityReport:
    """Evaluate the complementarity inequalities between horizontal coherences
    and population convergence on every snapshot pair (0, t).

    Entries based on the thermal-populations identity require the initial
    diagonal cut to be thermal to ``fit_tol``; otherwise the report is marked
    not-applicable (only the convention-free check (i) is still evaluated).
    """
    if not series.states:
        raise InvariantViolation("series carries no states; rebuild with decompose_series")
    els = series.els
    first = series.snapshots[0]
    rho0_d = dephase_diagonal(series.states[0], els)
    beta0, residual = fit_inverse_temperature(rho0_d, els)
    applicable = math.isfinite(beta0) and residual <= fit_tol
    flags = () if applicable else (FLAG_NOT_APPLICABLE,)

    entries: list[ComplementarityEntry] = []
    for snap, state in zip(series.snapshots[1:], series.states[1:]):
        minus_dch = -(snap.C_h - first.C_h)
        minus_ddth = -(snap.D_th - first.D_th)
        sum_ok = minus_dch + minus_ddth >= -tol
        if applicable:
            weighted = (beta0 - series.beta_B) * (snap.E_S - first.E_S)
            backtrack = relative_entropy(dephase_diagonal(state, els), rho0_d)
            resid = minus_ddth - (weighted - backtrack)
            energy_ok = abs(resid) <= tol
            reversal_active = weighted < 0.0
            reversal_ok = (minus_dch >= -weighted - tol) if reversal_active else None
            generation_active = -minus_dch > tol
            generation_ok = (weighted >= -minus_dch - tol) if generation_active else None
        else:
            weighted = float("nan")
            backtrack = float("nan")
            resid = float("nan")
            energy_ok = False
            reversal_active = False
            reversal_ok = None
            generation_active = False
            generation_ok = None
        entries.append(
            ComplementarityEntry(
                t=snap.t,
                minus_dCh=minus_dch,
                minus_dDth=minus_ddth,
                weighted_dE=weighted,
                backtrack=backtrack,
                sum_nonneg_ok=sum_ok,
                energy_identity_residual=resid,
                energy_identity_ok=energy_ok,
                reversal_active=reversal_active,
                reversal_bound_ok=reversal_ok,
                generation_active=generation_active,
                generation_bound_ok=generation_ok,
            )
        )

    initial_rate_ok: bool | None = None
    if applicable and series.beta_B != 0.0:
        e_dot0 = first.Phi_rate / series.beta_B
        initial_rate_ok = -first.rate_C_h + (beta0 - series.beta_B) * e_dot0 >= -tol
    return ComplementarityReport(
        applicable=applicable,
        beta_0=beta0 if applicable else None,
        fit_residual=residual,
        entries=tuple(entries),
        initial_rate_ok=initial_rate_ok,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Otto cycle: incoherent vs coherent working-medium dissipation
# ---------------------------------------------------------------------------

FLAG_MODE_MISMATCH = "mode-mismatch"


@dataclass(frozen=True)
class OttoMachineResult:
    """Per-cycle energetics of one machine at its limit cycle."""

    Q_c: float
    Q_h: float
    W: float
    eta: float | None
    Sigma: float
    second_law_residual: float
    cycles: int
    flags: tuple[str, ...] = ()
    stroke_states: tuple[DensityMatrix, ...] = ()


@dataclass(frozen=True)
class OttoCycleReport:
    """Limit-cycle comparison of the incoherent and coherent (starred) machines.

    ``equal_W_identity`` / ``equal_eta_identity`` hold the residuals of the
    two exchange relations, evaluated only on the branch that applies.
    """

    incoherent: OttoMachineResult
    coherent: OttoMachineResult
    lam: float
    equal_W_applies: bool
    equal_W_identity: float | None
    equal_eta_applies: bool
    equal_eta_identity: float | None


def _proportionality(H_cold: HermitianObservable, H_hot: HermitianObservable) -> float:
    hc, hh = H_cold.elements, H_hot.elements
    denom = float(np.trace(hc @ hc).real)
    if denom <= 0.0:
        raise InvariantViolation("H_cold must be nonzero")
    lam = float(np.trace(hh @ hc).real) / denom
    if lam <= 0.0 or max_abs(hh - lam * hc) > 1e-10 * max(1.0, max_abs(hh)):
        raise InvariantViolation("H_hot must be a positive rescaling of H_cold")
    return lam


class _Stroke:
    """Full relaxation under one isochore generator via a cached propagator."""

    def __init__(self, gen: LindbladGenerator, stroke_time: float):
        self.gen = gen
        self.step = scipy.linalg.expm(gen.superoperator * stroke_time)

    def relax(self, rho: DensityMatrix) -> DensityMatrix:
        vec = self.step @ rho.elements.reshape(-1)
        d = self.gen.dim
        return DensityMatrix(_resymm(vec.reshape(d, d)), rho.basis_labels)


def _resymm(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.conj().T)
    return m / m.trace().real


def _run_machine(
    label: str,
    gen_cold: LindbladGenerator,
    gen_hot: LindbladGenerator,
    h_cold: np.ndarray,
    h_hot: np.ndarray,
    beta_c: float,
    beta_h: float,
    rho_start: DensityMatrix,
    stroke_time: float,
    max_cycles: int,
    cycle_tol: float,
    residual_tol: float,
) -> OttoMachineResult:
    cold = _Stroke(gen_cold, stroke_time)
    hot = _Stroke(gen_hot, stroke_time)
    s0 = rho_start
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        s1 = cold.relax(s0)          # isochore at the cold bath (H_cold)
        s2 = hot.relax(s1)           # adiabatic rescale, isochore at the hot bath
        if trace_distance(s2, s0) < cycle_tol:
            s0 = s2
            break
        s0 = s2
    else:
        raise NonConvergence(f"{label}: no limit cycle within {max_cycles} cycles")
    s1 = cold.relax(s0)
    s2 = hot.relax(s1)
    for gen, state, name in ((gen_cold, s1, "cold"), (gen_hot, s2, "hot")):
        resid = max_abs(gen.apply(state))
        if resid > residual_tol:
            raise NonConvergence(
                f"{label}: {name} isochore residual ||L rho|| = {resid:.3e} "
                f"exceeds {residual_tol:.1e}; stroke_time too short"
            )
    q_c = float(np.trace(h_cold @ (s1.elements - s0.elements)).real)
    q_h = float(np.trace(h_hot @ (s2.elements - s1.elements)).real)
    w = -q_c - q_h
    ds_cold = von_neumann_entropy(s1) - von_neumann_entropy(s0)
    ds_hot = von_neumann_entropy(s2) - von_neumann_entropy(s1)
    sigma = (ds_cold - beta_c * q_c) + (ds_hot - beta_h * q_h)
    second_law = sigma + beta_c * q_c + beta_h * q_h
    if abs(second_law) > 1e-8:
        raise NonConvergence(
            f"{label}: closed-cycle second law violated by {second_law:.3e}; "
            "the cycle has not closed"
        )
    flags: tuple[str, ...] = ()
    if q_h > 0.0 and w <= 0.0:
        eta = abs(w) / q_h
    else:
        eta = None
        flags = (FLAG_MODE_MISMATCH,)
    return OttoMachineResult(
        Q_c=q_c,
        Q_h=q_h,
        W=w,
        eta=eta,
        Sigma=sigma,
        second_law_residual=second_law,
        cycles=cycles,
        flags=flags,
        stroke_states=(s0, s1, s2),
    )


def otto_cycle(
    H_cold: HermitianObservable,
    H_hot: HermitianObservable,
    bath_c: BathSpectrum,
    bath_h: BathSpectrum,
    coupling_coherent: HermitianObservable | Sequence[HermitianObservable],
    coupling_incoherent: HermitianObservable | Sequence[HermitianObservable],
    stroke_time: float,
    initial_state: DensityMatrix | None = None,
    max_cycles: int = 200,
    cycle_tol: float = 1e-10,
    residual_tol: float = 1e-8,
) -> OttoCycleReport:
    """Run both Otto machines to their limit cycle and compare energetics.

    Adiabatic strokes are exact spectral rescalings H -> lam H carrying the
    state unchanged, so they are entropy-free and work-only.  Each coupling
    argument may be a single observable (one dissipation channel) or a
    sequence of observables (independent channels, one per element); the
    incoherent machine is conventionally the per-subsystem local channels,
    the coherent one a single collective channel.  The limit cycle of the
    coherent machine depends on the initial state through the conserved
    collective-sector weights; ``initial_state`` defaults to the cold thermal
    state.
    """
    lam = _proportionality(H_cold, H_hot)
    els_c = build_level_structure(H_cold)
    els_h = build_level_structure(H_hot)
    if initial_state is None:
        initial_state = thermal_state_of(els_c, bath_c.beta_B)

    def channels(x) -> list[HermitianObservable]:
        return [x] if isinstance(x, HermitianObservable) else list(x)

    results = {}
    for label, coup in (("incoherent", coupling_incoherent), ("coherent", coupling_coherent)):
        gen_cold = build_multichannel_generator(channels(coup), els_c, bath_c)
        gen_hot = build_multichannel_generator(channels(coup), els_h, bath_h)
        results[label] = _run_machine(
            label,
            gen_cold,
            gen_hot,
            els_c.hamiltonian().elements,
            els_h.hamiltonian().elements,
            bath_c.beta_B,
            bath_h.beta_B,
            initial_state,
            stroke_time,
            max_cycles,
            cycle_tol,
            residual_tol,
        )

    inc, coh = results["incoherent"], results["coherent"]
    equal_w = abs(coh.W - inc.W) < 1e-9
    equal_eta = (
        inc.eta is not None and coh.eta is not None and abs(coh.eta - inc.eta) < 1e-9
    )
    dq_h = coh.Q_h - inc.Q_h
    equal_w_resid = None
    if equal_w and inc.eta is not None and coh.eta is not None:
        equal_w_resid = (coh.eta - inc.eta) - dq_h * inc.W / (inc.Q_h * coh.Q_h)
    equal_eta_resid = None
    if equal_eta:
        equal_eta_resid = (abs(coh.W) - abs(inc.W)) - (1.0 + inc.Q_c / inc.Q_h) * dq_h
    return OttoCycleReport(
        incoherent=inc,
        coherent=coh,
        lam=lam,
        equal_W_applies=equal_w,
        equal_W_identity=equal_w_resid,
        equal_eta_applies=equal_eta,
        equal_eta_identity=equal_eta_resid,
    )
