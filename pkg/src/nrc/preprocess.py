"""Feature preprocessing: unit-norm columns and PCA projection.

The experiment pipeline is PCA (fit on training columns only) followed by
l2 normalization of the projected columns.
"""

from dataclasses import dataclass

import numpy as np

from nrc.errors import BadDimension, DimensionMismatch, ZeroNormSample
from nrc.linalg import as_matrix

ZERO_NORM = 1e-12


def l2_normalize_columns(X):
    """Scale every column of ``X`` to unit Euclidean norm.

    Raises
    ------
    ZeroNormSample
        If a column has norm below ``1e-12``; the message lists the offenders.
    """
    X = as_matrix(X)
    norms = np.linalg.norm(X, axis=0)
    bad = np.flatnonzero(norms < ZERO_NORM)
    if bad.size:
        shown = ", ".join(map(str, bad[:10])) + (" ..." if bad.size > 10 else "")
        raise ZeroNormSample(f"{bad.size} column(s) with zero norm: {shown}")
    return np.asfortranarray(X / norms)


@dataclass(frozen=True)
class PcaModel:
    """Centered PCA basis.

    Attributes
    ----------
    mean : ndarray, shape (D,)
    components : ndarray, shape (D, d)
        Orthonormal columns, ordered by decreasing variance; each column's
        largest-magnitude entry is positive.
    explained_variance : ndarray, shape (d,)
        Sample variance (divisor ``N - 1``) along each component.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    @property
    def input_dim(self):
        return self.components.shape[0]

    @property
    def output_dim(self):
        return self.components.shape[1]


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _complete_basis(U, D, d):
    """Extend orthonormal columns ``U`` to ``d`` columns, deterministically."""
    have = U.shape[1]
    if have >= d:
        return U[:, :d]
    # Orthogonalize the standard basis against U and keep the most independent.
    Q, _ = np.linalg.qr(np.hstack([U, np.eye(D)]))
    extra = Q[:, have:d]
    return np.hstack([U, extra])


def pca_fit(X, d):
    """Fit a ``d``-component centered PCA to the columns of ``X``.

    When there are fewer samples than features the eigenproblem is solved on
    the N x N Gram matrix of the centered data instead of the D x D
    covariance.
    """
    X = as_matrix(X)
    D, N = X.shape
    if int(d) != d or not 1 <= d <= min(D, N):
        raise BadDimension(f"d must satisfy 1 <= d <= min(D, N) = {min(D, N)}, got {d}")
    d = int(d)
    mean = X.mean(axis=1)
    Xc = X - mean[:, None]
    denom = max(N - 1, 1)

    if N < D:
        G = Xc.T @ Xc
        evals, W = np.linalg.eigh((G + G.T) / 2)
        order = np.argsort(evals)[::-1]
        evals, W = evals[order], W[:, order]
        keep = evals > evals[0] * 1e-12 if evals[0] > 0 else np.zeros_like(evals, bool)
        k = min(int(keep.sum()), d)
        U = np.zeros((D, 0))
        if k:
            # re-orthonormalize to clean up rounding from the Gram route
            U, _ = np.linalg.qr(Xc @ W[:, :k] / np.sqrt(evals[:k]))
        U = _complete_basis(U, D, d)
    else:
        C = Xc @ Xc.T
        evals, V = np.linalg.eigh((C + C.T) / 2)
        order = np.argsort(evals)[::-1][:d]
        U = V[:, order]

    U = _fix_signs(U)
    # variance measured along the final basis, so it agrees with transform()
    proj = U.T @ Xc
    var = np.maximum(np.sum(proj * proj, axis=1) / denom, 0.0)
    order = np.argsort(-var, kind="stable")
    U, var = U[:, order], var[order]
    return PcaModel(mean=mean, components=np.asfortranarray(U), explained_variance=var)


def pca_transform(model, X):
    """Project columns of ``X`` onto the model's components: ``U^T (X - mean)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != model.input_dim or X.ndim not in (1, 2):
        raise DimensionMismatch(
            f"data of shape {X.shape} does not match PCA input dimension {model.input_dim}"
        )
    if X.ndim == 1:
        return model.components.T @ (X - model.mean)
    return np.asfortranarray(model.components.T @ (X - model.mean[:, None]))


def pca_inverse_transform(model, Z):
    """Map projected coordinates back to the input space."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] != model.output_dim or Z.ndim not in (1, 2):
        raise DimensionMismatch(f"expected {model.output_dim} rows, got shape {Z.shape}")
    if Z.ndim == 1:
        return model.components @ Z + model.mean
    return model.components @ Z + model.mean[:, None]
