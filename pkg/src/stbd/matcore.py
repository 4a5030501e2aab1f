"""Dense complex linear-algebra primitives.

Everything here works on plain ``numpy`` arrays of dtype ``complex128``
(real input is promoted). Functions never modify their arguments.

The relative tolerance used by the checks in this module is the module
attribute :data:`RTOL`; change it in one place to tighten or relax every
guard at once.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateChannel, InfeasibleDimensions, InvalidArgument, NumericalFailure

#: Relative tolerance shared by every numerical guard in the package.
RTOL = 1e-9

# Smallest kept singular value of an interference stack, relative to the
# largest, below which the stack is treated as rank deficient.
RANK_GUARD = 1e-8


class SVDFactorization(NamedTuple):
    """Full SVD ``A = U @ diag(s) @ Vh`` with ``s`` nonincreasing."""

    U: np.ndarray
    singular_values: np.ndarray
    Vh: np.ndarray

    @property
    def V(self) -> np.ndarray:
        return self.Vh.conj().T


def as_complex(A) -> np.ndarray:
    """Return ``A`` as a 2-D complex128 array (no copy when already so)."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2:
        raise InvalidArgument(f"expected a 2-D matrix, got shape {A.shape}")
    return A


def build_convolution_matrix(h, n_cols: int) -> np.ndarray:
    """Banded Toeplitz matrix of the linear convolution with ``h``.

    Column ``j`` holds ``h`` in rows ``j .. j+len(h)-1``, so that
    ``build_convolution_matrix(h, n) @ x == np.convolve(h, x)`` for any
    length-``n`` vector ``x``.

    Parameters
    ----------
    h : array_like
        Filter taps, length ``L >= 1``.
    n_cols : int
        Number of input samples.

    Returns
    -------
    np.ndarray
        Matrix of shape ``(n_cols + L - 1, n_cols)``.
    """
    h = np.asarray(h, dtype=np.complex128).ravel()
    if h.size == 0:
        raise InvalidArgument("convolution taps must be non-empty")
    if n_cols < 1:
        raise InvalidArgument(f"n_cols must be >= 1, got {n_cols}")
    L = h.size
    T = np.zeros((n_cols + L - 1, n_cols), dtype=np.complex128)
    rows = np.arange(L)[:, None] + np.arange(n_cols)[None, :]
    cols = np.broadcast_to(np.arange(n_cols), (L, n_cols))
    T[rows, cols] = h[:, None]
    return T


def _condition_report(A: np.ndarray) -> str:
    finite = np.isfinite(A).all()
    msg = f"shape={A.shape}, finite={finite}, fro_norm={np.linalg.norm(A) if finite else np.nan:.3e}"
    return msg


def svd(A, full_matrices: bool = True) -> SVDFactorization:
    """Singular value decomposition with nonincreasing singular values.

    Raises
    ------
    InvalidArgument
        If ``A`` is empty.
    NumericalFailure
        If LAPACK does not converge.
    """
    A = as_complex(A)
    if A.size == 0:
        raise InvalidArgument(f"cannot factor an empty matrix of shape {A.shape}")
    try:
        U, s, Vh = np.linalg.svd(A, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge ({_condition_report(A)})") from exc
    return SVDFactorization(U, s, Vh)


def null_space_basis(A, nullity: int) -> np.ndarray:
    """Orthonormal basis of the null space of a full-row-rank matrix.

    The dimension of the null space is supplied by the caller instead of
    being inferred from a singular-value threshold: the last ``nullity``
    right singular vectors are returned. A guard checks that the smallest
    kept singular value is not negligible relative to the largest one,
    which would mean the draw is rank deficient and the nullity is wrong.

    Parameters
    ----------
    A : array_like
        Matrix of shape ``(p, q)``; ``p`` may be zero.
    nullity : int
        Known null-space dimension, normally ``q - p``.

    Returns
    -------
    np.ndarray
        Matrix of shape ``(q, nullity)`` with orthonormal columns.
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2:
        raise InvalidArgument(f"expected a 2-D matrix, got shape {A.shape}")
    p, q = A.shape
    if nullity <= 0:
        raise InfeasibleDimensions(f"null space dimension must be positive, got {nullity}")
    if nullity > q - p:
        raise InfeasibleDimensions(
            f"a {p}x{q} matrix of full row rank has nullity {q - p}, requested {nullity}")
    if p == 0:
        return np.eye(q, dtype=np.complex128)[:, q - nullity:]
    fact = svd(A, full_matrices=True)
    rank = q - nullity
    s = fact.singular_values
    if rank > 0 and s[rank - 1] < RANK_GUARD * s[0]:
        raise DegenerateChannel(
            f"matrix is rank deficient: sigma[{rank - 1}]/sigma[0] = {s[rank - 1] / s[0]:.3e}")
    return fact.V[:, rank:]


def hermitian_eig(A, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues nonincreasing.

    Returns ``(w, Q)`` with ``A == Q @ diag(w) @ Q^H``.
    """
    A = as_complex(A)
    tol = RTOL if tol is None else tol
    if A.shape[0] != A.shape[1]:
        raise InvalidArgument(f"Hermitian matrix must be square, got {A.shape}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > tol * max(scale, np.finfo(float).tiny):
        raise InvalidArgument("matrix is not Hermitian within tolerance")
    try:
        w, Q = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigh did not converge ({_condition_report(A)})") from exc
    return w[::-1].copy(), Q[:, ::-1].copy()


def pseudoinverse(A) -> np.ndarray:
    """Moore-Penrose pseudoinverse (zero matrix maps to the zero matrix)."""
    A = as_complex(A)
    if A.size == 0:
        return np.zeros((A.shape[1], A.shape[0]), dtype=np.complex128)
    return np.linalg.pinv(A)
