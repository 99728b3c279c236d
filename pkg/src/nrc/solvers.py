"""Coding solvers.

All coders share the split formulation

    min_c ||y - X c||^2 + g(z)   s.t.  c = z

with augmented Lagrangian ``||y - Xc||^2 + <delta, z - c> + (rho/2)||z - c||^2``.
The c-step is the same regularized least-squares solve for every coder,

    c = (X^T X + (rho/2) I)^{-1} (X^T y + (rho/2) z + delta/2),

and only the z-step (a proximal map of ``g``) differs:

* NNLS:  ``z = max(0, c - delta/rho)``
* lasso: ``z = soft_threshold(c - delta/rho, lam/rho)``

The inverse in the c-step is factored once per dictionary and reused for
every query (:func:`build_factorization`).
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from nrc.errors import ConfigError, DimensionMismatch, TooManyColumns
from nrc.linalg import as_matrix, as_vector, gram, spd_factor

DIRECT = "direct"
WOODBURY = "woodbury"

ORACLE_MAX_COLUMNS = 20


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters shared by the coders.

    ``max_iters`` defaults to 5, the iteration budget used for classification;
    accuracy-oriented callers should raise it (and lower ``tol``).
    """

    rho: float = 1.0
    max_iters: int = 5
    tol: float = 1e-6
    lam: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigError(f"max_iters must be a positive integer, got {self.max_iters}")
        if not (np.isfinite(self.tol) and self.tol > 0):
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError(f"lam must be nonnegative, got {self.lam}")


@dataclass
class AdmmState:
    c: np.ndarray
    z: np.ndarray
    delta: np.ndarray
    iter: int = 0


@dataclass
class CodingResult:
    """Output of a coder.

    ``coefficients`` is the reported code: ``z`` for the ADMM coders (so it
    satisfies the constraint exactly), the closed-form solution for ridge.
    ``history`` holds one ``(max|c-z|, max|dc|, max|dz|)`` triple per
    iteration.
    """

    coefficients: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    state: AdmmState | None = None


class GramInverseOperator:
    """Applies ``(X^T X + shift I)^{-1}`` through the Woodbury identity.

    With ``s = 1/shift`` the inverse equals
    ``s I - s^2 X^T (I + s X X^T)^{-1} X``, so only a D x D system is factored.
    For ADMM ``shift = rho/2`` which gives the familiar ``2/rho`` form.
    """

    def __init__(self, X, shift):
        if shift <= 0:
            raise ValueError(f"shift must be positive, got {shift}")
        self.X = X
        self.scale = 1.0 / shift
        D = X.shape[0]
        outer = X @ X.T
        outer = np.triu(outer) + np.triu(outer, 1).T
        self._inner = spd_factor(np.eye(D) + self.scale * outer)

    def apply(self, v):
        s = self.scale
        w = self._inner.solve(self.X @ v)
        return s * v - (s * s) * (self.X.T @ w)


class DictionaryFactorization:
    """Pre-stored inverse of ``X^T X + shift I`` for one dictionary.

    ``path`` is ``"direct"`` (Cholesky of the N x N matrix) or
    ``"woodbury"`` (Cholesky of a D x D matrix). The object is immutable and
    may be shared between threads.
    """

    def __init__(self, X, shift, path):
        if path not in (DIRECT, WOODBURY):
            raise ValueError(f"unknown factorization path {path!r}")
        self.X = X
        self.shift = float(shift)
        self.path = path
        if path == DIRECT:
            self._op = spd_factor(gram(X), shift)
        else:
            self._op = GramInverseOperator(X, shift)

    @property
    def n_atoms(self):
        return self.X.shape[1]

    @property
    def n_features(self):
        return self.X.shape[0]

    def solve(self, v):
        """Return ``(X^T X + shift I)^{-1} v``."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n_atoms:
            raise DimensionMismatch(
                f"vector of length {v.shape[0]} does not match {self.n_atoms} atoms"
            )
        if self.path == DIRECT:
            return self._op.solve(v)
        return self._op.apply(v)

    def xty(self, y):
        """The ``X^T y`` workspace term, computed once per query."""
        y = as_vector(y, "y", self.n_features)
        return self.X.T @ y

    def __repr__(self):
        D, N = self.X.shape
        return f"DictionaryFactorization(D={D}, N={N}, shift={self.shift!r}, path={self.path!r})"


def factorize(X, shift, path=None):
    """Factor ``X^T X + shift I``; Woodbury is chosen when there are more atoms than features.

    ``shift = 0`` is only possible on the direct path.
    """
    X = as_matrix(X)
    if shift < 0:
        raise ValueError(f"shift must be nonnegative, got {shift}")
    if path is None:
        D, N = X.shape
        path = WOODBURY if N > D and shift > 0 else DIRECT
    return DictionaryFactorization(X, shift, path)


def build_factorization(X, rho, path=None):
    """Pre-store the ADMM c-step inverse ``(X^T X + (rho/2) I)^{-1}``."""
    if not rho > 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    return factorize(X, rho / 2.0, path)


def admm_c_update(fact, xty, z, delta, rho):
    n = fact.n_atoms
    for name, v in (("xty", xty), ("z", z), ("delta", delta)):
        if np.shape(v) != (n,):
            raise DimensionMismatch(f"{name} has shape {np.shape(v)}, expected ({n},)")
    return fact.solve(xty + (rho / 2.0) * z + 0.5 * delta)


def admm_z_update(c, delta, rho):
    """Projection onto the nonnegative orthant: ``max(0, c - delta/rho)``."""
    c, delta = _same_length(c, delta)
    return np.maximum(c - delta / rho, 0.0)


def admm_dual_update(delta, z, c, rho):
    delta, z, c = _same_length(delta, z, c)
    return delta + rho * (z - c)


def soft_threshold(v, kappa):
    """Elementwise ``sign(v) * max(|v| - kappa, 0)``."""
    if kappa < 0:
        raise ValueError(f"kappa must be nonnegative, got {kappa}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def _project_nonneg(v):
    return np.maximum(v, 0.0)


def _same_length(*vectors):
    arrs = [np.asarray(v, dtype=np.float64) for v in vectors]
    n = arrs[0].shape
    for a in arrs[1:]:
        if a.shape != n:
            raise DimensionMismatch(f"vector shapes differ: {[x.shape for x in arrs]}")
    return arrs


def _prepare(X, y, rho, factorization):
    if factorization is None:
        factorization = build_factorization(X, rho)
    elif factorization.shift != rho / 2.0:
        raise ConfigError(
            f"factorization was built for rho={2 * factorization.shift}, config has rho={rho}"
        )
    elif X is not None and np.shape(X) != factorization.X.shape:
        raise DimensionMismatch("factorization was built for a different dictionary")
    return factorization, factorization.xty(y)


def _admm(fact, xty, cfg, z_step, callback=None):
    rho = cfg.rho
    n = fact.n_atoms
    c = np.zeros(n)
    z = np.zeros(n)
    delta = np.zeros(n)
    history = []
    converged = False
    t = 0
    while t < cfg.max_iters:
        c_new = fact.solve(xty + (rho / 2.0) * z + 0.5 * delta)
        z_new = z_step(c_new - delta / rho)
        delta = delta + rho * (z_new - c_new)
        gap = np.max(np.abs(c_new - z_new))
        dc = np.max(np.abs(c_new - c))
        dz = np.max(np.abs(z_new - z))
        history.append((float(gap), float(dc), float(dz)))
        c, z = c_new, z_new
        t += 1
        if callback is not None:
            callback(AdmmState(c=c, z=z, delta=delta, iter=t))
        if gap <= cfg.tol and dc <= cfg.tol and dz <= cfg.tol:
            converged = True
            break
    state = AdmmState(c=c, z=z, delta=delta, iter=t)
    return CodingResult(coefficients=z, iterations=t, converged=converged,
                        history=history, state=state)


def _zero_result(n):
    zeros = np.zeros(n)
    state = AdmmState(c=zeros.copy(), z=zeros.copy(), delta=zeros.copy(), iter=0)
    return CodingResult(coefficients=zeros, iterations=0, converged=True, history=[], state=state)


def nnls_admm(X, y, cfg=SolverConfig(), factorization=None, callback=None):
    """Non-negative least squares ``min ||y - Xc||^2 s.t. c >= 0`` by ADMM.

    Starts from ``c = z = delta = 0`` and stops once ``max|c - z|``,
    ``max|dc|`` and ``max|dz|`` are all below ``cfg.tol`` in the same
    iteration, or after ``cfg.max_iters`` iterations.

    Parameters
    ----------
    X : array_like, shape (D, N)
        Dictionary, one atom per column. May be ``None`` if ``factorization``
        is given.
    y : array_like, shape (D,)
    cfg : SolverConfig
    factorization : DictionaryFactorization, optional
        Pre-stored c-step inverse from :func:`build_factorization` with the
        same ``rho``; built on the fly when omitted.
    callback : callable, optional
        Called with an :class:`AdmmState` after every iteration.

    Returns
    -------
    CodingResult
        ``coefficients`` is the final ``z``, which is nonnegative.
    """
    fact, xty = _prepare(X, y, cfg.rho, factorization)
    if not np.any(np.asarray(y)):
        return _zero_result(fact.n_atoms)
    return _admm(fact, xty, cfg, _project_nonneg, callback)


def lasso_admm(X, y, cfg, factorization=None, callback=None):
    """l1-regularized coding ``min ||y - Xc||^2 + lam ||c||_1`` by ADMM.

    Same iteration and stopping rule as :func:`nnls_admm`, with the z-step
    replaced by soft thresholding at ``lam / rho``.
    """
    if not cfg.lam > 0:
        raise ConfigError(f"lasso coding requires lam > 0, got {cfg.lam}")
    fact, xty = _prepare(X, y, cfg.rho, factorization)
    if not np.any(np.asarray(y)):
        return _zero_result(fact.n_atoms)
    kappa = cfg.lam / cfg.rho
    return _admm(fact, xty, cfg, lambda v: soft_threshold(v, kappa), callback)


def ridge_code(X, y, lam, factorization=None):
    """Collaborative (ridge) code ``(X^T X + lam I)^{-1} X^T y``.

    ``factorization`` must have been built with ``shift == lam``
    (e.g. ``factorize(X, lam)``).
    """
    if lam < 0:
        raise ConfigError(f"lam must be nonnegative, got {lam}")
    if factorization is None:
        factorization = factorize(X, lam)
    elif factorization.shift != lam:
        raise ConfigError(f"factorization shift {factorization.shift} != lam {lam}")
    return factorization.solve(factorization.xty(y))


def nnls_oracle(X, y):
    """Exact NNLS by enumerating every support set.

    For each subset ``S`` of columns the unconstrained least-squares problem on
    ``X[:, S]`` is solved; candidates with a negative coefficient are dropped
    and the one with the smallest residual wins. Residuals equal to within
    ``1e-12`` relative count as ties, broken by smaller support and then by
    the lexicographically smaller index tuple. Exponential in ``N``.
    """
    X = as_matrix(X)
    D, N = X.shape
    if N > ORACLE_MAX_COLUMNS:
        raise TooManyColumns(f"oracle enumerates 2^N supports; N={N} > {ORACLE_MAX_COLUMNS}")
    y = as_vector(y, "y", D)
    ynorm = float(np.linalg.norm(y))
    tie = 1e-12 * max(ynorm, 1.0)

    best = np.zeros(N)
    best_res = ynorm
    best_key = (0, ())
    for size in range(1, N + 1):
        for S in combinations(range(N), size):
            cols = list(S)
            coef, *_ = np.linalg.lstsq(X[:, cols], y, rcond=None)
            if np.any(coef < 0):
                continue
            cand = np.zeros(N)
            cand[cols] = coef
            res = float(np.linalg.norm(y - X @ cand))
            key = (size, S)
            if res < best_res - tie or (abs(res - best_res) <= tie and key < best_key):
                best, best_res, best_key = cand, res, key
    return best
