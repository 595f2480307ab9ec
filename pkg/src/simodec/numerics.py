"""Complex linear-algebra substrate: Gram matrices, largest Hermitian
eigenvalue, and a tolerance-aware Cholesky factorization of positive
semidefinite matrices.

All routines work on ``numpy.ndarray`` with dtype complex128 and are pure
functions of their inputs, so values are safe to share across concurrent
workers.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "NotPositiveSemidefiniteError",
    "gram",
    "max_eigenvalue",
    "cholesky_psd",
]


class NotPositiveSemidefiniteError(ValueError):
    """Raised when a Cholesky pivot falls below the negative tolerance."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(
            f"matrix is not positive semidefinite: pivot {index} = {value:.6e}"
        )


def _check_finite(X: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")


def gram(X: np.ndarray, N: int) -> np.ndarray:
    """Scaled Gram matrix G = X^H X / N of an N-by-T observation matrix.

    The upper triangle is computed and mirrored, so the result is exactly
    Hermitian (bitwise, not merely up to rounding).
    """
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    if X.shape[0] != N:
        raise ValueError(f"row count {X.shape[0]} does not match N={N}")
    if N < 1:
        raise ValueError("N must be >= 1")
    _check_finite(X, "X")

    G = (X.conj().T @ X) / N
    # Exact Hermitian symmetrization: keep the upper triangle, mirror it.
    iu = np.triu_indices(G.shape[0], k=1)
    G[(iu[1], iu[0])] = G[iu].conj()
    np.fill_diagonal(G, G.diagonal().real)
    return G


def _hermitian_defect(G: np.ndarray) -> float:
    return float(np.max(np.abs(G - G.conj().T))) if G.size else 0.0


def max_eigenvalue(G: np.ndarray, herm_tol: float = 1e-9) -> float:
    """Largest eigenvalue of a Hermitian matrix.

    Backed by LAPACK's Hermitian eigensolver (``numpy.linalg.eigvalsh``),
    which comfortably meets the 1e-10 relative-accuracy contract.
    """
    G = np.asarray(G, dtype=np.complex128)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {G.shape}")
    _check_finite(G, "G")
    scale = max(1.0, float(np.max(np.abs(G)))) if G.size else 1.0
    if _hermitian_defect(G) > herm_tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    return float(np.linalg.eigvalsh(G)[-1])


def cholesky_psd(A: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Upper-triangular R with R^H R = A, for Hermitian PSD A.

    A pivot falling in [-tol, tol] is clamped to zero and the remainder of
    its row is zeroed (semidefinite completion), so exactly singular
    matrices factorize cleanly.  A pivot below -tol raises
    :class:`NotPositiveSemidefiniteError` with its index and value.

    tol defaults to 1e-10 times the largest diagonal entry.
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    _check_finite(A, "A")
    n = A.shape[0]
    if tol is None:
        tol = 1e-10 * max(1e-300, float(np.max(A.diagonal().real)) if n else 0.0)

    R = np.zeros((n, n), dtype=np.complex128)
    for i in range(n):
        d = A[i, i].real - float(np.sum(np.abs(R[:i, i]) ** 2))
        if d < -tol:
            raise NotPositiveSemidefiniteError(i, d)
        if d <= tol:
            # Semidefinite pivot: zero the pivot and the rest of the row.
            continue
        R[i, i] = np.sqrt(d)
        if i + 1 < n:
            R[i, i + 1 :] = (A[i, i + 1 :] - R[:i, i].conj() @ R[:i, i + 1 :]) / R[i, i]
    return R
