"""Dense linear-algebra kernel.

Matrices are float64 numpy arrays stored column-major, one sample per
column. Everything here returns fresh arrays; inputs are never modified.
"""

import numpy as np
from scipy import linalg as sla

from nrc.errors import DimensionMismatch, NotPositiveDefinite

# A Cholesky pivot ratio below this (squared, times n) means the matrix is
# numerically singular even if the factorization did not break down.
_PIVOT_EPS = np.finfo(np.float64).eps


def as_matrix(X, name="X"):
    """Validate ``X`` and return it as a read-only column-major float64 array."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    A = np.asfortranarray(A)
    if A is X and A.flags.writeable:
        A = A.copy(order="F")
    A.flags.writeable = False
    return A


def as_vector(v, name="v", length=None):
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {a.shape}")
    if length is not None and a.shape[0] != length:
        raise DimensionMismatch(f"{name} has length {a.shape[0]}, expected {length}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def gram(X):
    """Return ``X.T @ X`` with exactly symmetric entries."""
    X = as_matrix(X)
    A = X.T @ X
    # BLAS may round the two triangles differently; mirror the upper one.
    upper = np.triu(A)
    return upper + np.triu(A, 1).T


def matvec(X, v, transposed=False):
    """Dense product ``X @ v`` (or ``X.T @ v`` when ``transposed``)."""
    X = np.asarray(X, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    inner = X.shape[0] if transposed else X.shape[1]
    if v.ndim != 1 or v.shape[0] != inner:
        raise DimensionMismatch(
            f"cannot multiply {'X.T' if transposed else 'X'} of shape "
            f"{X.shape[::-1] if transposed else X.shape} by vector of shape {v.shape}"
        )
    return X.T @ v if transposed else X @ v


class SpdFactor:
    """Cholesky factor of ``A + ridge * I``.

    Parameters
    ----------
    lower : ndarray
        Lower-triangular factor ``L`` with ``L @ L.T == A + ridge * I``.
    """

    __slots__ = ("_cho", "dimension")

    def __init__(self, lower):
        lower = np.asarray(lower, dtype=np.float64)
        lower.flags.writeable = False
        self._cho = (lower, True)
        self.dimension = lower.shape[0]

    @property
    def lower(self):
        return self._cho[0]

    def solve(self, b):
        """Solve for one right-hand side (1-D) or several (2-D, one per column)."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.dimension or b.ndim not in (1, 2):
            raise DimensionMismatch(
                f"right-hand side of shape {b.shape} does not match factor "
                f"of dimension {self.dimension}"
            )
        return sla.cho_solve(self._cho, b, check_finite=False)

    def __repr__(self):
        return f"SpdFactor(dimension={self.dimension})"


def spd_factor(A, ridge=0.0):
    """Factor the symmetric positive-definite matrix ``A + ridge * I``.

    Raises
    ------
    NotPositiveDefinite
        If the factorization breaks down or the smallest pivot is negligible
        relative to the largest (the matrix is numerically singular).
    """
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains NaN or Inf")
    scale = max(np.max(np.abs(A)), 1.0)
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    n = A.shape[0]
    M = A + ridge * np.eye(n)
    try:
        L = sla.cholesky(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"Cholesky factorization failed ({exc}); increase the ridge or "
            "check for a degenerate dictionary"
        ) from None
    piv = np.diag(L)
    if not np.all(piv > 0) or (piv.min() / piv.max()) ** 2 < n * _PIVOT_EPS:
        raise NotPositiveDefinite(
            "matrix is numerically singular "
            f"(pivot ratio {piv.min() / max(piv.max(), 1e-300):.3e})"
        )
    return SpdFactor(L)


def solve_spd(F, b):
    """Solve ``(A + ridge * I) x = b`` with a factor from :func:`spd_factor`."""
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise DimensionMismatch(f"b must be 1-D, got shape {b.shape}")
    return F.solve(b)
