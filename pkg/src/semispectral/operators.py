"""Dense Hermitian matrix algebra.

Matrices are plain complex ``numpy`` arrays. Functions here validate and
symmetrize their inputs instead of wrapping them in a container class, so the
rest of the package can pass arrays around freely.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL_HERM = 1e-10


class EigensolverError(RuntimeError):
    """Raised when the dense Hermitian eigensolver does not converge."""


def as_hermitian(a, tol_herm: float = TOL_HERM) -> np.ndarray:
    """Return ``(A + A^H) / 2`` as a complex array.

    Raises ``ValueError`` if ``A`` is not square or deviates from its
    conjugate transpose by more than ``tol_herm`` in any entry.
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.size == 0:
        raise ValueError("matrix must have positive dimension")
    asym = np.max(np.abs(a - a.conj().T))
    if asym > tol_herm:
        raise ValueError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    return 0.5 * (a + a.conj().T)


def is_hermitian(a, tol_herm: float = TOL_HERM) -> bool:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol_herm)


def _eigh(a: np.ndarray):
    try:
        return np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc


def _eigvalsh(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(a)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(str(exc)) from exc


def operator_norm(a) -> float:
    """Spectral norm.

    For Hermitian input this is the largest absolute eigenvalue; any other
    square matrix falls back to the largest singular value.
    """
    a = np.asarray(a, dtype=complex)
    if a.size == 0:
        return 0.0
    if is_hermitian(a):
        ev = _eigvalsh(0.5 * (a + a.conj().T))
        return float(np.max(np.abs(ev)))
    return float(np.linalg.norm(a, 2))


def commutator_norm(a, b) -> float:
    """Spectral norm of ``AB - BA``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a @ b - b @ a, 2))


@dataclass(frozen=True)
class EffectVerdict:
    accepted: bool
    min_eigenvalue: float
    max_eigenvalue: float

    def __bool__(self) -> bool:
        return self.accepted


def validate_effect(a, tol: float = 1e-9) -> EffectVerdict:
    """Check that the spectrum of ``A`` lies in ``[-tol, 1 + tol]``.

    Non-Hermitian input is rejected with NaN extremal eigenvalues rather than
    raising; the verdict carries the failure.
    """
    a = np.asarray(a, dtype=complex)
    if not is_hermitian(a):
        return EffectVerdict(False, float("nan"), float("nan"))
    ev = _eigvalsh(0.5 * (a + a.conj().T))
    lo, hi = float(ev[0]), float(ev[-1])
    return EffectVerdict(lo >= -tol and hi <= 1 + tol, lo, hi)


def is_projection(a, tol: float = 1e-9) -> bool:
    a = np.asarray(a, dtype=complex)
    if not is_hermitian(a, tol):
        return False
    if np.linalg.norm(a @ a - a, 2) > tol:
        return False
    ev = _eigvalsh(0.5 * (a + a.conj().T))
    return bool(np.all(np.minimum(np.abs(ev), np.abs(ev - 1)) <= tol))


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues (ascending) with their spectral projectors."""

    eigenvalues: np.ndarray
    projectors: np.ndarray  # shape (K, d, d)
    cluster_tol: float

    @property
    def pairs(self):
        return list(zip(self.eigenvalues.tolist(), self.projectors))

    def reassemble(self) -> np.ndarray:
        return np.einsum("k,kij->ij", self.eigenvalues, self.projectors)

    def apply(self, func) -> np.ndarray:
        """Functional calculus: ``sum_k func(lambda_k) P_k``."""
        vals = np.array([func(x) for x in self.eigenvalues])
        return np.einsum("k,kij->ij", vals, self.projectors)


def cluster_sorted(values: np.ndarray, cluster_tol: float) -> list[np.ndarray]:
    """Split ascending ``values`` into index groups at gaps larger than ``cluster_tol``."""
    if len(values) == 0:
        return []
    breaks = np.nonzero(np.diff(values) > cluster_tol)[0] + 1
    return np.split(np.arange(len(values)), breaks)


def projector_onto(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column span of ``vectors`` (re-orthonormalized)."""
    q, _ = np.linalg.qr(vectors)
    return q @ q.conj().T


def spectral_decompose(a, cluster_tol: float | None = None) -> SpectralDecomposition:
    """Eigen-decomposition with degenerate eigenvalues merged.

    Parameters
    ----------
    a : array_like
        Hermitian matrix (within ``TOL_HERM``).
    cluster_tol : float, optional
        Absolute gap below which adjacent eigenvalues are treated as one.
        Defaults to ``1e-8 * ||A||`` (``1e-8`` for the zero matrix).

    Returns
    -------
    SpectralDecomposition
        Cluster means as eigenvalues, one projector per cluster.
    """
    a = as_hermitian(a)
    ev, vecs = _eigh(a)
    if cluster_tol is None:
        scale = float(np.max(np.abs(ev)))
        cluster_tol = 1e-8 * scale if scale > 0 else 1e-8
    if cluster_tol < 0:
        raise ValueError("cluster_tol must be nonnegative")
    groups = cluster_sorted(ev, cluster_tol)
    eigenvalues = np.array([ev[g].mean() for g in groups])
    projectors = np.array([projector_onto(vecs[:, g]) for g in groups])
    return SpectralDecomposition(eigenvalues, projectors, float(cluster_tol))


def matrix_to_json(a) -> list:
    """Row-major nested lists of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("matrix must be a square array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
