"""Degenerate energy-level structure and the two dephasing cuts.

The diagonal cut kills every off-diagonal element in the labeled eigenbasis;
the block-diagonal cut kills only coherences between different energy levels
(vertical coherences), leaving coherences inside each degenerate eigenspace
(horizontal coherences) untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import AmbiguousClustering, InvariantViolation, ShapeMismatch
from .qcore import (
    DensityMatrix,
    HermitianObservable,
    default_labels,
    max_abs,
    relative_entropy,
    thermal_state,
    von_neumann_entropy,
)

PROJECTOR_TOL = 1e-12
MEASURE_CONSISTENCY_TOL = 1e-8

# Appendix-A validity window: the clustered master equation holds for times
# much smaller than 1/delta; the integrator enforces t <= HORIZON_FACTOR/delta.
HORIZON_FACTOR = 0.1


@dataclass(frozen=True)
class EnergyLevelStructure:
    """Clustered spectrum: level energies e_n, degeneracies l_n, projectors pi_n.

    ``basis_vectors`` columns are the chosen eigenbasis |n,i> ordered by
    (level, in-level index); the diagonal cut is taken in this basis.  When the
    Hamiltonian is diagonal in the supplied basis the input ordering inside
    each cluster is preserved, so the labeled basis is the natural one.
    """

    energies: tuple[float, ...]
    degeneracies: tuple[int, ...]
    basis_vectors: np.ndarray
    basis_labels: tuple[str, ...] = field(default=())
    cluster_width: float = 0.0
    member_energies: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        v = np.asarray(self.basis_vectors, dtype=complex)
        dim = v.shape[0]
        if v.shape != (dim, dim):
            raise ShapeMismatch(f"basis_vectors must be square, got {v.shape}")
        if sum(self.degeneracies) != dim:
            raise InvariantViolation("degeneracies do not sum to the dimension")
        if len(self.energies) != len(self.degeneracies):
            raise ShapeMismatch("energies and degeneracies length mismatch")
        dev = max_abs(v.conj().T @ v - np.eye(dim))
        if dev > PROJECTOR_TOL * max(1.0, dim):
            raise InvariantViolation(f"basis not orthonormal (deviation {dev:.3e})")
        labels = tuple(self.basis_labels) or default_labels(dim)
        if len(labels) != dim:
            raise ShapeMismatch("label count does not match dimension")
        members = self.member_energies or tuple(
            tuple(e for _ in range(l)) for e, l in zip(self.energies, self.degeneracies)
        )
        scale = max(1.0, max(abs(e) for e in self.energies))
        tol = max(self.cluster_width, 1e-10 * scale)
        for e_members in members:
            if max(e_members) - min(e_members) > tol * (1 + 1e-9):
                raise InvariantViolation("in-cluster energy spread exceeds delta")
        for k in range(len(self.energies) - 1):
            gap = min(members[k + 1]) - max(members[k])
            if gap <= self.cluster_width:
                raise AmbiguousClustering(
                    f"inter-cluster gap {gap:.6e} <= delta {self.cluster_width:.6e} "
                    f"between levels {k} and {k + 1}"
                )
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "basis_vectors", v)
        object.__setattr__(self, "basis_labels", labels)
        object.__setattr__(self, "energies", tuple(float(e) for e in self.energies))
        object.__setattr__(self, "degeneracies", tuple(int(l) for l in self.degeneracies))
        object.__setattr__(self, "member_energies", members)

    @property
    def dim(self) -> int:
        return self.basis_vectors.shape[0]

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @property
    def level_of_index(self) -> tuple[int, ...]:
        out: list[int] = []
        for n, l in enumerate(self.degeneracies):
            out.extend([n] * l)
        return tuple(out)

    @property
    def basis_map(self) -> tuple[tuple[int, int], ...]:
        """(n, i) label of each eigenbasis column, 1 <= i <= l_n."""
        out: list[tuple[int, int]] = []
        for n, l in enumerate(self.degeneracies):
            out.extend((n, i + 1) for i in range(l))
        return tuple(out)

    def projector(self, n: int) -> np.ndarray:
        """pi_n = sum_i |n,i><n,i|."""
        cols = self._level_slice(n)
        block = self.basis_vectors[:, cols]
        return block @ block.conj().T

    def projectors(self) -> list[np.ndarray]:
        return [self.projector(n) for n in range(self.n_levels)]

    def _level_slice(self, n: int) -> slice:
        start = sum(self.degeneracies[:n])
        return slice(start, start + self.degeneracies[n])

    def hamiltonian(self) -> HermitianObservable:
        """sum_n e_n pi_n, the representative (clustered) Hamiltonian."""
        diag = np.concatenate(
            [np.full(l, e) for e, l in zip(self.energies, self.degeneracies)]
        )
        m = (self.basis_vectors * diag) @ self.basis_vectors.conj().T
        return HermitianObservable(0.5 * (m + m.conj().T))

    @property
    def horizon(self) -> float:
        """Maximum trustworthy evolution time in near-degenerate mode."""
        if self.cluster_width <= 0.0:
            return float("inf")
        return HORIZON_FACTOR / self.cluster_width

    def is_degenerate(self) -> bool:
        return any(l > 1 for l in self.degeneracies)


def build_level_structure(
    H: HermitianObservable,
    delta: float = 0.0,
    labels: tuple[str, ...] = (),
) -> EnergyLevelStructure:
    """Greedily cluster the spectrum of H into levels separated by > delta.

    A new cluster starts whenever the gap between consecutive sorted
    eigenvalues exceeds ``delta`` (or 1e-10 * ||H|| when delta = 0).  The
    cluster energy is the degeneracy-weighted mean of its members.  If H is
    diagonal in the supplied basis, the input basis ordering is kept inside
    each cluster; otherwise eigenvectors are ordered by descending overlap
    with the input basis and phase-fixed for reproducibility.
    """
    if delta < 0.0:
        raise InvariantViolation("delta must be nonnegative")
    m = H.elements
    dim = H.dim
    scale = max(1.0, max_abs(m))
    diag_dev = max_abs(m - np.diag(np.diag(m)))
    if diag_dev <= 1e-12 * scale:
        eigvals = np.real(np.diag(m)).copy()
        vecs = np.eye(dim, dtype=complex)
        order = np.argsort(eigvals, kind="stable")
    else:
        eigvals, vecs = np.linalg.eigh(m)
        order = np.argsort(eigvals, kind="stable")
    eigvals = eigvals[order]
    vecs = vecs[:, order]

    tol = delta if delta > 0.0 else 1e-10 * max_abs(m)
    clusters: list[list[int]] = [[0]]
    for k in range(1, dim):
        if eigvals[k] - eigvals[k - 1] > tol:
            clusters.append([k])
        else:
            clusters[-1].append(k)

    if delta > 0.0:
        for cluster in clusters:
            spread = eigvals[cluster[-1]] - eigvals[cluster[0]]
            if spread > delta:
                raise AmbiguousClustering(
                    f"chained cluster spans {spread:.6e} > delta {delta:.6e}: "
                    "levels cannot be separated at this width"
                )
        for a, b in zip(clusters, clusters[1:]):
            gap = eigvals[b[0]] - eigvals[a[-1]]
            if gap <= delta:
                raise AmbiguousClustering(
                    f"inter-cluster gap {gap:.6e} <= delta {delta:.6e}"
                )

    energies: list[float] = []
    degeneracies: list[int] = []
    member_energies: list[tuple[float, ...]] = []
    columns: list[np.ndarray] = []
    for cluster in clusters:
        es = eigvals[cluster]
        energies.append(float(np.mean(es)))
        degeneracies.append(len(cluster))
        member_energies.append(tuple(float(e) for e in es))
        block = vecs[:, cluster]
        columns.append(_order_and_fix_phase(block))
    basis = np.hstack(columns)
    return EnergyLevelStructure(
        energies=tuple(energies),
        degeneracies=tuple(degeneracies),
        basis_vectors=basis,
        basis_labels=labels,
        cluster_width=delta,
        member_energies=tuple(member_energies),
    )


def _order_and_fix_phase(block: np.ndarray) -> np.ndarray:
    """Order eigenvectors by their dominant input-basis index, fix phases."""
    dominant = [int(np.argmax(np.abs(block[:, j]))) for j in range(block.shape[1])]
    order = np.argsort(np.array(dominant), kind="stable")
    block = block[:, order]
    fixed = block.copy()
    for j in range(block.shape[1]):
        k = int(np.argmax(np.abs(block[:, j])))
        phase = block[k, j] / abs(block[k, j])
        fixed[:, j] = block[:, j] / phase
    return fixed


def _check_state(rho: DensityMatrix, els: EnergyLevelStructure) -> None:
    if rho.dim != els.dim:
        raise ShapeMismatch(f"state dimension {rho.dim} != structure dimension {els.dim}")


def dephase_block_diagonal(rho: DensityMatrix, els: EnergyLevelStructure) -> DensityMatrix:
    """sum_n pi_n rho pi_n: kills vertical coherences only."""
    _check_state(rho, els)
    out = np.zeros_like(rho.elements)
    for n in range(els.n_levels):
        p = els.projector(n)
        out += p @ rho.elements @ p
    return DensityMatrix(0.5 * (out + out.conj().T), rho.basis_labels)


def dephase_diagonal(rho: DensityMatrix, els: EnergyLevelStructure) -> DensityMatrix:
    """Zero all off-diagonal elements in the labeled eigenbasis."""
    _check_state(rho, els)
    v = els.basis_vectors
    populations = np.real(np.einsum("ki,kl,li->i", v.conj(), rho.elements, v))
    out = (v * populations) @ v.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T), rho.basis_labels)


def coherence_measures(rho: DensityMatrix, els: EnergyLevelStructure) -> tuple[float, float]:
    """(C_v, C_h): entropy gaps opened by the two dephasing cuts.

    C_v = S(rho_BD) - S(rho) measures vertical coherences, C_h = S(rho_D) -
    S(rho_BD) horizontal ones.  The equivalent relative-entropy forms
    S(rho|rho_BD) and S(rho_BD|rho_D) are asserted to agree to 1e-8.
    """
    rho_bd = dephase_block_diagonal(rho, els)
    rho_d = dephase_diagonal(rho, els)
    s = von_neumann_entropy(rho)
    s_bd = von_neumann_entropy(rho_bd)
    s_d = von_neumann_entropy(rho_d)
    c_v = s_bd - s
    c_h = s_d - s_bd
    alt_v = relative_entropy(rho, rho_bd)
    alt_h = relative_entropy(rho_bd, rho_d)
    if abs(alt_v - c_v) > MEASURE_CONSISTENCY_TOL or abs(alt_h - c_h) > MEASURE_CONSISTENCY_TOL:
        raise InvariantViolation(
            f"coherence measures disagree with relative-entropy forms: "
            f"C_v {c_v:.3e} vs {alt_v:.3e}, C_h {c_h:.3e} vs {alt_h:.3e}"
        )
    return c_v, c_h


def thermal_state_of(els: EnergyLevelStructure, beta: float) -> DensityMatrix:
    """Thermal state of the clustered Hamiltonian, diagonal in the labeled basis."""
    return thermal_state(els.hamiltonian(), beta, els.basis_labels)


def distance_to_thermal(rho: DensityMatrix, els: EnergyLevelStructure, beta_B: float) -> float:
    """D_th = S(rho_D | rho_th(beta_B)) >= 0: population distance to equilibrium."""
    rho_d = dephase_diagonal(rho, els)
    return relative_entropy(rho_d, thermal_state_of(els, beta_B))
