"""Non-negative representation classification.

Queries are coded as non-negative combinations of training samples (NNLS
solved by ADMM) and assigned to the class with the smallest reconstruction
residual. Ridge and l1 coders share the same pipeline for comparison.
"""

from nrc.classifier import (
    Coder,
    LabeledDataset,
    Prediction,
    fit,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from nrc.solvers import SolverConfig, lasso_admm, nnls_admm, ridge_code

__version__ = "0.1.0"

__all__ = [
    "Coder", "LabeledDataset", "Prediction", "SolverConfig", "fit", "lasso_admm",
    "load_model", "nnls_admm", "predict", "predict_batch", "ridge_code", "save_model",
]
