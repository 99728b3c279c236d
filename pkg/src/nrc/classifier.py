"""Representation-based classification.

A query is coded over the whole (column-normalized) training matrix and
assigned to the class whose own atoms reconstruct it best:

    label(y) = argmin_k || y - X_k c_k ||_2

The coder decides the flavour: non-negative least squares (NRC), ridge
(CRC) or l1 (SRC). Whatever depends only on the dictionary is factored once
in :func:`fit` and reused by every query.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from nrc._blob import read_blob, write_blob
from nrc.errors import ConfigError, DimensionMismatch, EmptyClass, FormatError, ZeroNormQuery
from nrc.linalg import as_vector
from nrc.preprocess import ZERO_NORM, PcaModel, l2_normalize_columns
from nrc.solvers import (
    CodingResult,
    SolverConfig,
    build_factorization,
    factorize,
    lasso_admm,
    nnls_admm,
    ridge_code,
)


class Coder(str, Enum):
    NNLS = "nnls"
    RIDGE = "ridge"
    LASSO = "lasso"


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix (one sample per column) with a label per column.

    Labels may be any sortable hashable values; ``classes`` holds them in
    sorted order and ``targets`` maps each column to its position there.
    Passing ``classes`` explicitly declares classes that may have no samples.
    """

    features: np.ndarray
    labels: np.ndarray
    classes: np.ndarray = None
    targets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain NaN or Inf")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != X.shape[1]:
            raise DimensionMismatch(
                f"{labels.shape[0] if labels.ndim == 1 else labels.shape} labels for "
                f"{X.shape[1]} samples"
            )
        present = np.unique(labels)
        if self.classes is None:
            classes = present
        else:
            classes = np.unique(np.asarray(self.classes))
            unknown = np.setdiff1d(present, classes)
            if unknown.size:
                raise ValueError(f"labels {unknown.tolist()} are not among the declared classes")
        targets = np.searchsorted(classes, labels) if labels.size else np.zeros(0, np.int64)
        object.__setattr__(self, "features", np.asfortranarray(X))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "targets", targets.astype(np.int64))

    @property
    def n_features(self):
        return self.features.shape[0]

    @property
    def n_samples(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.classes)

    def class_index(self):
        """Column positions of each class, in class order."""
        return [np.flatnonzero(self.targets == k) for k in range(self.n_classes)]

    def class_counts(self):
        return np.bincount(self.targets, minlength=self.n_classes)

    def subset(self, columns):
        columns = np.asarray(columns, dtype=np.int64)
        return LabeledDataset(self.features[:, columns], self.labels[columns], self.classes)


@dataclass(frozen=True)
class Prediction:
    label: object
    label_index: int
    residuals: np.ndarray
    coefficients: np.ndarray


@dataclass(frozen=True, eq=False)
class FittedClassifier:
    dictionary: np.ndarray
    targets: np.ndarray
    classes: np.ndarray
    coder: Coder
    config: SolverConfig
    factorization: object = field(repr=False)
    class_index: tuple = field(repr=False)

    @property
    def n_features(self):
        return self.dictionary.shape[0]

    @property
    def n_atoms(self):
        return self.dictionary.shape[1]

    @property
    def n_classes(self):
        return len(self.classes)


def _factorization_for(X, coder, cfg):
    if coder is Coder.RIDGE:
        return factorize(X, cfg.lam)
    if coder is Coder.LASSO and not cfg.lam > 0:
        raise ConfigError(f"lasso coder requires lam > 0, got {cfg.lam}")
    return build_factorization(X, cfg.rho)


def _assemble(dictionary, targets, classes, coder, cfg):
    coder = Coder(coder)
    dictionary.flags.writeable = False
    fact = _factorization_for(dictionary, coder, cfg)
    index = tuple(np.flatnonzero(targets == k) for k in range(len(classes)))
    return FittedClassifier(dictionary=dictionary, targets=targets, classes=classes,
                            coder=coder, config=cfg, factorization=fact, class_index=index)


def fit(data, coder=Coder.NNLS, cfg=SolverConfig()):
    """Normalize the training columns and pre-store the coder's factorization.

    Raises
    ------
    EmptyClass
        A declared class has no training samples, or the dataset is empty.
    ZeroNormSample
        A training column has (numerically) zero norm.
    """
    if data.n_samples == 0:
        raise EmptyClass("training set is empty")
    counts = data.class_counts()
    if np.any(counts == 0):
        missing = data.classes[counts == 0].tolist()
        raise EmptyClass(f"no training samples for class(es) {missing}")
    X = l2_normalize_columns(data.features)
    return _assemble(X, data.targets.copy(), data.classes.copy(), coder, cfg)


def code(clf, y):
    """Code an (already normalized) query over the dictionary."""
    y = as_vector(y, "y", clf.n_features)
    cfg = clf.config
    if clf.coder is Coder.NNLS:
        return nnls_admm(None, y, cfg, factorization=clf.factorization)
    if clf.coder is Coder.LASSO:
        return lasso_admm(None, y, cfg, factorization=clf.factorization)
    c = ridge_code(None, y, cfg.lam, factorization=clf.factorization)
    return CodingResult(coefficients=c, iterations=1, converged=True)


def class_residuals(clf, y, c):
    """``r_k = ||y - X_k c_k||`` for every class ``k``."""
    y = as_vector(y, "y", clf.n_features)
    c = as_vector(c, "c", clf.n_atoms)
    X = clf.dictionary
    nz = c != 0
    out = np.empty(clf.n_classes)
    for k, cols in enumerate(clf.class_index):
        cols = cols[nz[cols]]
        if cols.size:
            out[k] = np.linalg.norm(y - X[:, cols] @ c[cols])
        else:
            out[k] = np.linalg.norm(y)
    return out


def predict(clf, y):
    """Normalize ``y``, code it and return the minimal-residual class.

    Exact residual ties go to the lowest class index.
    """
    y = as_vector(y, "y", clf.n_features)
    norm = np.linalg.norm(y)
    if norm < ZERO_NORM:
        raise ZeroNormQuery("query has zero norm")
    y = y / norm
    result = code(clf, y)
    r = class_residuals(clf, y, result.coefficients)
    k = int(np.argmin(r))
    return Prediction(label=clf.classes[k], label_index=k, residuals=r,
                      coefficients=result.coefficients)


def predict_batch(clf, queries, workers=1):
    """Predict every column of ``queries``; output order follows the columns.

    With ``workers > 1`` queries run on a thread pool. Each query is handled
    by :func:`predict` exactly as in the sequential path, so results are
    bit-identical either way.
    """
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != clf.n_features:
        raise DimensionMismatch(
            f"queries must have shape ({clf.n_features}, M), got {Q.shape}"
        )
    cols = [Q[:, j] for j in range(Q.shape[1])]
    if workers is None or workers <= 1 or len(cols) < 2:
        return [predict(clf, q) for q in cols]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda q: predict(clf, q), cols))


# -- persistence -------------------------------------------------------------

MODEL_MAGIC = b"NRCM"
MODEL_VERSION = 1


def _label_to_json(v):
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    return str(v)


def save_model(path, clf, pca=None):
    """Write a fitted classifier (and optionally its PCA front end) to ``path``.

    The factorization is not stored; it is rebuilt deterministically on load.
    """
    header = {
        "format": "nrc-model",
        "D": clf.n_features,
        "N": clf.n_atoms,
        "K": clf.n_classes,
        "coder": clf.coder.value,
        "config": {"rho": clf.config.rho, "max_iters": clf.config.max_iters,
                   "tol": clf.config.tol, "lam": clf.config.lam},
        "classes": [_label_to_json(v) for v in clf.classes],
        "pca": pca is not None,
    }
    arrays = {"dictionary": clf.dictionary, "targets": clf.targets}
    if pca is not None:
        arrays.update(pca_mean=pca.mean, pca_components=pca.components,
                      pca_explained_variance=pca.explained_variance)
    write_blob(path, MODEL_MAGIC, MODEL_VERSION, header, arrays)


def load_model(path):
    """Inverse of :func:`save_model`; returns ``(classifier, pca_or_None)``."""
    header, arrays = read_blob(path, MODEL_MAGIC, {MODEL_VERSION})
    try:
        X = np.asfortranarray(arrays["dictionary"])
        targets = arrays["targets"]
        if X.shape != (header["D"], header["N"]) or targets.shape != (header["N"],):
            raise FormatError(f"{path}: array shapes disagree with header")
        classes = np.array(header["classes"])
        if len(classes) != header["K"]:
            raise FormatError(f"{path}: class list disagrees with header")
        clf = _assemble(X, targets, classes, header["coder"], SolverConfig(**header["config"]))
        pca = None
        if header["pca"]:
            pca = PcaModel(mean=arrays["pca_mean"],
                           components=np.asfortranarray(arrays["pca_components"]),
                           explained_variance=arrays["pca_explained_variance"])
    except KeyError as exc:
        raise FormatError(f"{path}: missing field {exc}") from None
    return clf, pca
