"""Dense Hermitian linear algebra and information-theoretic primitives.

Conventions: entropies are in nats (natural log), hbar = 1, eigenvalues of a
density matrix below ``CLIP_FLOOR`` are treated as exactly zero (null space).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvariantViolation, ShapeMismatch

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-10
POSITIVITY_TOL = 1e-10
CLIP_FLOOR = 1e-14
SUPPORT_WEIGHT_TOL = 1e-12


def default_labels(dim: int) -> tuple[str, ...]:
    return tuple(str(k) for k in range(dim))


def tensor_labels(labels_a: tuple[str, ...], labels_b: tuple[str, ...]) -> tuple[str, ...]:
    """Labels of a tensor-product basis, first factor slowest (kron order)."""
    return tuple(f"{a}*{b}" for a in labels_a for b in labels_b)


def _as_square_complex(elements: np.ndarray) -> np.ndarray:
    m = np.asarray(elements, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def max_abs(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


@dataclass(frozen=True)
class HermitianObservable:
    """Hermitian matrix in a fixed basis (energy units for Hamiltonians)."""

    elements: np.ndarray

    def __post_init__(self):
        m = _as_square_complex(self.elements)
        dev = max_abs(m - m.conj().T)
        if dev > HERMITICITY_TOL * max(1.0, max_abs(m)):
            raise InvariantViolation(f"matrix not Hermitian (max deviation {dev:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "elements", m)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite matrix in a labeled basis."""

    elements: np.ndarray
    basis_labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        m = _as_square_complex(self.elements)
        labels = tuple(self.basis_labels) or default_labels(m.shape[0])
        if len(labels) != m.shape[0]:
            raise ShapeMismatch(
                f"{len(labels)} basis labels for dimension {m.shape[0]}"
            )
        herm_dev = max_abs(m - m.conj().T)
        if herm_dev > HERMITICITY_TOL:
            raise InvariantViolation(f"not Hermitian (max deviation {herm_dev:.3e})")
        m = 0.5 * (m + m.conj().T)
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise InvariantViolation(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        lam = np.linalg.eigvalsh(m)
        if lam[0] < -POSITIVITY_TOL:
            raise InvariantViolation(f"negative eigenvalue {lam[0]:.3e}")
        m.setflags(write=False)
        object.__setattr__(self, "elements", m)
        object.__setattr__(self, "basis_labels", labels)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    def eig(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.elements)


def cleaned_state(
    matrix: np.ndarray,
    basis_labels: tuple[str, ...] = (),
    drift_tol: float = 1e-8,
) -> DensityMatrix:
    """Re-symmetrize ((m + m^dag)/2), renormalize and validate a candidate state.

    Raises InvariantViolation if the required repair exceeds ``drift_tol``.
    """
    m = _as_square_complex(matrix)
    herm_dev = max_abs(m - m.conj().T)
    tr = m.trace()
    m = 0.5 * (m + m.conj().T)
    lam = np.linalg.eigvalsh(m)
    if herm_dev > drift_tol or abs(tr - 1.0) > drift_tol or lam[0] < -drift_tol:
        raise InvariantViolation(
            f"state drift beyond {drift_tol:.1e}: hermiticity {herm_dev:.3e}, "
            f"trace deviation {abs(tr - 1.0):.3e}, min eigenvalue {lam[0]:.3e}"
        )
    m = m / m.trace().real
    if lam[0] < 0.0:
        # project tiny negatives away, then renormalize once more
        w, v = np.linalg.eigh(m)
        w = np.clip(w, 0.0, None)
        m = (v * w) @ v.conj().T
        m = 0.5 * (m + m.conj().T)
        m = m / m.trace().real
    return DensityMatrix(m, basis_labels)


def expectation(rho: DensityMatrix | np.ndarray, op: np.ndarray) -> float:
    """Real part of Tr(rho op); op is assumed Hermitian."""
    m = rho.elements if isinstance(rho, DensityMatrix) else rho
    return float(np.trace(m @ op).real)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """-Tr rho ln rho with the convention 0 ln 0 = 0."""
    lam = np.linalg.eigvalsh(rho.elements)
    lam = lam[lam > CLIP_FLOOR]
    return float(-np.sum(lam * np.log(lam)))


def matrix_log_on_support(rho: DensityMatrix | np.ndarray) -> HermitianObservable:
    """U diag(ln lambda) U^dag restricted to eigenvalues above the clip floor.

    On the null space the log is defined as 0; callers must pair the result
    with states supported on the support of ``rho``.
    """
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    lam, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    if lam[0] < -POSITIVITY_TOL:
        raise InvariantViolation(f"negative eigenvalue {lam[0]:.3e} in matrix log")
    loglam = np.where(lam > CLIP_FLOOR, np.log(np.maximum(lam, CLIP_FLOOR)), 0.0)
    out = (vec * loglam) @ vec.conj().T
    return HermitianObservable(0.5 * (out + out.conj().T))


def null_projector(rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Projector onto the numerical null space (eigenvalues <= clip floor)."""
    m = rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    lam, vec = np.linalg.eigh(0.5 * (m + m.conj().T))
    null = vec[:, lam <= CLIP_FLOOR]
    return null @ null.conj().T


def relative_entropy(sigma: DensityMatrix, rho: DensityMatrix) -> float:
    """Tr sigma (ln sigma - ln rho); +inf if supp(sigma) is not in supp(rho)."""
    if sigma.dim != rho.dim:
        raise ShapeMismatch(f"dimension mismatch {sigma.dim} != {rho.dim}")
    if sigma.basis_labels != rho.basis_labels:
        raise ShapeMismatch("basis labels differ between sigma and rho")
    lam, vec = np.linalg.eigh(rho.elements)
    null = vec[:, lam <= CLIP_FLOOR]
    if null.shape[1]:
        weight = float(np.trace(null.conj().T @ sigma.elements @ null).real)
        if weight > SUPPORT_WEIGHT_TOL:
            return float("inf")
    log_sigma = matrix_log_on_support(sigma).elements
    log_rho = matrix_log_on_support(rho).elements
    val = float(np.trace(sigma.elements @ (log_sigma - log_rho)).real)
    if val < -POSITIVITY_TOL:
        raise InvariantViolation(f"relative entropy {val:.3e} below -{POSITIVITY_TOL}")
    return val


def thermal_state(H: HermitianObservable, beta: float, labels: tuple[str, ...] = ()) -> DensityMatrix:
    """exp(-beta H)/Z, computed in the eigenbasis of H with overflow shift.

    ``beta`` may be negative (inverted populations); for |beta| * spread large
    the result degenerates to the normalized projector onto the extremal
    eigenspace, which is the intended limit.
    """
    if not np.isfinite(beta):
        raise InvariantViolation("beta must be finite")
    lam, vec = np.linalg.eigh(H.elements)
    exponent = -beta * lam
    weights = np.exp(exponent - exponent.max())
    weights /= weights.sum()
    m = (vec * weights) @ vec.conj().T
    return DensityMatrix(0.5 * (m + m.conj().T), labels)


def partial_trace(
    rho_joint: DensityMatrix,
    dims: tuple[int, int],
    keep: str,
) -> DensityMatrix:
    """Reduced state on factor ``keep`` in {"A", "B"} of a bipartite state."""
    d_a, d_b = dims
    if d_a * d_b != rho_joint.dim:
        raise ShapeMismatch(f"dims {dims} incompatible with dimension {rho_joint.dim}")
    if keep not in ("A", "B"):
        raise ShapeMismatch(f"keep must be 'A' or 'B', got {keep!r}")
    r = rho_joint.elements.reshape(d_a, d_b, d_a, d_b)
    if keep == "A":
        reduced = np.einsum("ikjk->ij", r)
    else:
        reduced = np.einsum("kikj->ij", r)
    labels = _factor_labels(rho_joint.basis_labels, dims, keep)
    return DensityMatrix(0.5 * (reduced + reduced.conj().T), labels)


def _factor_labels(joint: tuple[str, ...], dims: tuple[int, int], keep: str) -> tuple[str, ...]:
    """Recover factor labels when the joint labels are 'a*b' products."""
    d_a, d_b = dims
    parts = [lab.split("*", 1) for lab in joint]
    if all(len(p) == 2 for p in parts):
        cand_a = tuple(parts[i * d_b][0] for i in range(d_a))
        cand_b = tuple(parts[j][1] for j in range(d_b))
        if tensor_labels(cand_a, cand_b) == joint:
            return cand_a if keep == "A" else cand_b
    return default_labels(d_a if keep == "A" else d_b)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2) ||a - b||_1 via eigenvalues of the Hermitian difference."""
    if a.dim != b.dim:
        raise ShapeMismatch(f"dimension mismatch {a.dim} != {b.dim}")
    lam = np.linalg.eigvalsh(a.elements - b.elements)
    return float(0.5 * np.sum(np.abs(lam)))
