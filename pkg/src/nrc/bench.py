"""Experiment harness: hyperparameter cross-validation, multi-trial accuracy
runs, per-query timing and machine-readable reports.

An experiment config is an INI file with an ``[experiment]`` section::

    [experiment]
    manifest = usps.ini        ; dataset manifest, relative to this file
    coder = nnls               ; nnls | ridge | lasso
    max_iters = 5
    tol = 1e-6
    rho = 1.0                  ; used when cross_validate = false
    lam = 0.0
    pca_dim =                  ; empty for raw features
    per_class = 300
    seed = 0
    trials = 10
    cross_validate = true
    cv_folds = 5
    rho_grid = 0.001, 0.01, 0.1, 1, 10
    lambda_grid = 0.0001, 0.001, 0.01, 0.1, 1
    per_trial_cv = false       ; default: tune on trial 0 and reuse
    timing = false             ; timings make reports non-reproducible
    workers = 1
"""

import configparser
import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from nrc.classifier import Coder, LabeledDataset, fit, predict, predict_batch
from nrc.data_io import (
    SplitSpec,
    load_manifest_data,
    read_manifest,
    stratified_folds,
    stratified_sample,
)
from nrc.errors import ConfigError, NrcError
from nrc.preprocess import l2_normalize_columns, pca_fit, pca_transform
from nrc.solvers import SolverConfig

DEFAULT_RHO_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
REPORT_FORMATS = ("jsonl", "csv")


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: str = ""
    coder: Coder = Coder.NNLS
    solver: SolverConfig = SolverConfig()
    pca_dim: int | None = None
    split: SplitSpec = SplitSpec(per_class=1)
    cross_validate: bool = True
    cv_folds: int = 5
    rho_grid: tuple = DEFAULT_RHO_GRID
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    per_trial_cv: bool = False
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "coder", Coder(self.coder))
        object.__setattr__(self, "rho_grid", tuple(float(v) for v in self.rho_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if self.cv_folds < 2:
            raise ConfigError(f"cv_folds must be >= 2, got {self.cv_folds}")
        for name in ("rho_grid", "lambda_grid"):
            grid = getattr(self, name)
            if not grid or not all(v > 0 and math.isfinite(v) for v in grid):
                raise ConfigError(f"{name} must be a non-empty list of positive numbers")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ConfigError(f"pca_dim must be >= 1, got {self.pca_dim}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def grid(self):
        """Hyperparameter searched by CV: rho for NNLS, lambda otherwise."""
        return self.rho_grid if self.coder is Coder.NNLS else self.lambda_grid

    @property
    def grid_name(self):
        return "rho" if self.coder is Coder.NNLS else "lam"

    def with_hyperparameter(self, value):
        return replace(self, solver=replace(self.solver, **{self.grid_name: value}))

    def echo(self):
        """Flat, JSON-friendly view used in reports."""
        return {
            "manifest": self.manifest,
            "coder": self.coder.value,
            "rho": self.solver.rho,
            "lam": self.solver.lam,
            "max_iters": self.solver.max_iters,
            "tol": self.solver.tol,
            "pca_dim": self.pca_dim,
            "per_class": self.split.per_class,
            "seed": self.split.seed,
            "trials": self.split.trials,
            "cross_validate": self.cross_validate,
            "cv_folds": self.cv_folds,
            "rho_grid": list(self.rho_grid),
            "lambda_grid": list(self.lambda_grid),
            "per_trial_cv": self.per_trial_cv,
            "timing": self.timing,
        }


def _grid(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def config_from_mapping(values, base_dir=None):
    """Build an :class:`ExperimentConfig` from string key/value pairs.

    Unknown keys raise :class:`ConfigError` so typos are not silently ignored.
    """
    known = {"manifest", "coder", "rho", "lam", "max_iters", "tol", "pca_dim", "per_class",
             "seed", "trials", "cross_validate", "cv_folds", "rho_grid", "lambda_grid",
             "per_trial_cv", "timing", "workers"}
    values = {k: v for k, v in values.items() if v is not None and str(v).strip() != ""}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")

    def get(key, conv, default):
        if key not in values:
            return default
        try:
            return conv(values[key])
        except ValueError:
            raise ConfigError(f"bad value for {key}: {values[key]!r}") from None

    def boolean(v):
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ValueError(v)

    manifest = str(values.get("manifest", "")).strip()
    if manifest and base_dir is not None and not Path(manifest).is_absolute():
        manifest = str(Path(base_dir) / manifest)
    try:
        coder = Coder(str(values.get("coder", "nnls")).strip().lower())
        solver = SolverConfig(rho=get("rho", float, 1.0), max_iters=get("max_iters", int, 5),
                              tol=get("tol", float, 1e-6), lam=get("lam", float, 0.0))
        split = SplitSpec(per_class=get("per_class", int, 1), seed=get("seed", int, 0),
                          trials=get("trials", int, 1))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(
        manifest=manifest,
        coder=coder,
        solver=solver,
        pca_dim=get("pca_dim", int, None),
        split=split,
        cross_validate=get("cross_validate", boolean, True),
        cv_folds=get("cv_folds", int, 5),
        rho_grid=get("rho_grid", _grid, DEFAULT_RHO_GRID),
        lambda_grid=get("lambda_grid", _grid, DEFAULT_LAMBDA_GRID),
        per_trial_cv=get("per_trial_cv", boolean, False),
        timing=get("timing", boolean, False),
        workers=get("workers", int, 1),
    )


def read_experiment_config(path):
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path}")
    if "experiment" not in cp:
        raise ConfigError(f"{path}: missing [experiment] section")
    return config_from_mapping(dict(cp["experiment"]), base_dir=path.parent)


# -- pipeline ----------------------------------------------------------------

def prepare_features(train_X, test_X=None, pca_dim=None):
    """Optional PCA fitted on ``train_X`` only, then unit-norm columns.

    Returns ``(train, test_or_None, pca_model_or_None)``.
    """
    model = None
    if pca_dim is not None:
        model = pca_fit(train_X, pca_dim)
        train_X = pca_transform(model, train_X)
        if test_X is not None:
            test_X = pca_transform(model, test_X)
    train_X = l2_normalize_columns(train_X)
    if test_X is not None and test_X.shape[1]:
        test_X = l2_normalize_columns(test_X)
    return train_X, test_X, model


def _accuracy(clf, X, targets, workers=1):
    if X.shape[1] == 0:
        return math.nan
    preds = predict_batch(clf, X, workers=workers)
    hits = sum(p.label_index == t for p, t in zip(preds, targets))
    return hits / X.shape[1]


def _targets_in(clf_classes, data):
    """Map ``data``'s labels onto positions in ``clf_classes`` (-1 if unseen)."""
    pos = {c: i for i, c in enumerate(clf_classes.tolist())}
    return np.array([pos.get(v, -1) for v in data.labels.tolist()], dtype=np.int64)


def evaluate(train, test, cfg):
    """Fit on ``train`` and return accuracy on ``test`` (both LabeledDataset)."""
    Xtr, Xte, _ = prepare_features(train.features, test.features, cfg.pca_dim)
    clf = fit(LabeledDataset(Xtr, train.labels, train.classes), cfg.coder, cfg.solver)
    return _accuracy(clf, Xte, _targets_in(clf.classes, test), cfg.workers)


@dataclass(frozen=True)
class CvResult:
    value: float
    scores: tuple


def cross_validate(train, cfg):
    """Stratified k-fold search over the coder's hyperparameter grid.

    Folds depend only on ``cfg.split.seed``. Each fold refits PCA (when
    enabled) on its own training part. The grid value with the highest mean
    fold accuracy wins; exact ties go to the smaller value.
    """
    fold = stratified_folds(train, cfg.cv_folds, cfg.split.seed)
    parts = [(train.subset(np.flatnonzero(fold != f)), train.subset(np.flatnonzero(fold == f)))
             for f in range(cfg.cv_folds)]
    best, best_score, scores = None, -math.inf, []
    for value in sorted(cfg.grid):
        trial_cfg = cfg.with_hyperparameter(value)
        score = math.fsum(evaluate(a, b, trial_cfg) for a, b in parts) / len(parts)
        scores.append((value, score))
        if score > best_score:
            best, best_score = value, score
    return CvResult(value=best, scores=tuple(scores))


# -- timing ------------------------------------------------------------------

@dataclass(frozen=True)
class TimingStats:
    mean: float
    median: float
    count: int


def time_query(clf, queries, warmup=1):
    """Wall-clock seconds per :func:`predict` call, one query at a time.

    The first ``warmup`` queries are run once untimed beforehand; the
    factorization was already built by :func:`fit` and is not timed.
    """
    Q = np.asarray(queries, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] < 1:
        raise ValueError("time_query needs at least one query column")
    for j in range(min(warmup, Q.shape[1])):
        predict(clf, Q[:, j])
    samples = []
    clock = time.perf_counter
    for j in range(Q.shape[1]):
        q = Q[:, j]
        t0 = clock()
        predict(clf, q)
        samples.append(clock() - t0)
    return TimingStats(mean=statistics.fmean(samples), median=statistics.median(samples),
                       count=len(samples))


# -- experiment --------------------------------------------------------------

@dataclass(frozen=True)
class TrialResult:
    trial: int
    accuracy: float
    n_train: int
    n_test: int
    hyperparameter: float
    time_mean: float | None = None
    time_median: float | None = None


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    provenance: str
    trials: tuple = ()
    mean: float = math.nan
    std: float = math.nan

    @staticmethod
    def aggregate(config, provenance, trials):
        acc = [t.accuracy for t in trials]
        mean = math.fsum(acc) / len(acc) if acc else math.nan
        std = statistics.stdev(acc) if len(acc) > 1 else (0.0 if acc else math.nan)
        return ExperimentReport(config=config, provenance=provenance, trials=tuple(trials),
                                mean=mean, std=std)


class TrialFailure(NrcError):
    pass


def _with_trial(exc, trial):
    """Re-raise ``exc`` with the trial index in its message, keeping its type."""
    msg = f"trial {trial}: {exc}"
    try:
        new = type(exc)(msg)
    except Exception:
        new = TrialFailure(msg)
    new.trial = trial
    return new


def _load(cfg, data):
    if data is not None:
        train, test = data
        provenance = getattr(train, "source", "") or "in-memory"
        return train, test, provenance
    if not cfg.manifest:
        raise ConfigError("no dataset: set 'manifest' in the experiment config")
    m = read_manifest(cfg.manifest)
    train, test = load_manifest_data(m)
    provenance = m.provenance or f"{m.name} ({m.format})"
    return train, test, provenance


def _as_labeled(ds, classes=None):
    if ds is None or isinstance(ds, LabeledDataset):
        return ds
    return LabeledDataset(ds.features, ds.labels, classes)


def run_experiment(cfg, data=None):
    """Run ``cfg.split.trials`` independent trials and aggregate accuracy.

    Parameters
    ----------
    cfg : ExperimentConfig
    data : (train, test) pair, optional
        Pre-loaded datasets (``RawDataset`` or ``LabeledDataset``); the
        manifest is used when omitted. With no test set, each trial is
        scored on the samples not drawn for training.

    Returns
    -------
    ExperimentReport
    """
    train_all, test_all, provenance = _load(cfg, data)
    train_all = _as_labeled(train_all)
    test_all = _as_labeled(test_all)
    tuned = None
    results = []
    for trial in range(cfg.split.trials):
        try:
            train, rest = stratified_sample(train_all, cfg.split, trial)
            test = test_all if test_all is not None else rest
            if not cfg.cross_validate:
                value = getattr(cfg.solver, cfg.grid_name)
            elif tuned is None or cfg.per_trial_cv:
                tuned = cross_validate(train, cfg).value
                value = tuned
            else:
                value = tuned
            trial_cfg = cfg.with_hyperparameter(value)
            Xtr, Xte, _ = prepare_features(train.features, test.features, cfg.pca_dim)
            clf = fit(LabeledDataset(Xtr, train.labels, train.classes), cfg.coder,
                      trial_cfg.solver)
            acc = _accuracy(clf, Xte, _targets_in(clf.classes, test), cfg.workers)
            tm = time_query(clf, Xte) if cfg.timing and Xte.shape[1] else None
        except NrcError as exc:
            raise _with_trial(exc, trial) from exc
        results.append(TrialResult(
            trial=trial, accuracy=acc, n_train=train.n_samples, n_test=test.n_samples,
            hyperparameter=float(value),
            time_mean=tm.mean if tm else None, time_median=tm.median if tm else None,
        ))
    return ExperimentReport.aggregate(cfg.echo(), provenance, results)


# -- reports -----------------------------------------------------------------

TRIAL_FIELDS = tuple(f.name for f in fields(TrialResult))
_INT_FIELDS = {"trial", "n_train", "n_test"}


def _num(v):
    """Full-precision text for a number (``repr`` round-trips floats exactly)."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _parse_num(name, text):
    if text == "":
        return None
    return int(text) if name in _INT_FIELDS else float(text)


def _json_float(v):
    # JSON has no NaN literal; keep the file strictly valid
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _unjson_float(v):
    return float(v) if isinstance(v, str) else v


def emit_report(report, path, fmt="jsonl"):
    """Write ``report`` to ``path`` as JSON lines or CSV.

    Both layouts have a fixed field order and full float precision, so
    emitting the same report twice gives byte-identical files.

    * ``jsonl``: a ``meta`` line, one ``trial`` line per trial, a ``summary`` line.
    * ``csv``: ``# key=<json>`` metadata lines, a header row, one row per trial.
    """
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"report format must be one of {REPORT_FORMATS}, got {fmt!r}")
    text = _render_jsonl(report) if fmt == "jsonl" else _render_csv(report)
    Path(path).write_text(text, encoding="utf-8", newline="")


def _dump(obj):
    return json.dumps(obj, sort_keys=False, separators=(",", ":"), allow_nan=False)


def _render_jsonl(report):
    lines = [_dump({"type": "meta", "provenance": report.provenance, "config": report.config})]
    for t in report.trials:
        lines.append(_dump({"type": "trial", **{k: _json_float(v) for k, v in asdict(t).items()}}))
    lines.append(_dump({"type": "summary", "mean": _json_float(report.mean),
                        "std": _json_float(report.std), "trials": len(report.trials)}))
    return "\n".join(lines) + "\n"


def _render_csv(report):
    buf = io.StringIO()
    buf.write(f"# provenance={json.dumps(report.provenance)}\n")
    buf.write(f"# config={json.dumps(report.config, separators=(',', ':'))}\n")
    buf.write(f"# mean={_num(report.mean)}\n")
    buf.write(f"# std={_num(report.std)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for t in report.trials:
        w.writerow([_num(getattr(t, k)) for k in TRIAL_FIELDS])
    return buf.getvalue()


def read_report(path):
    """Parse a file written by :func:`emit_report` (format sniffed from content)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("{"):
        return _parse_jsonl(text)
    return _parse_csv(text)


def _parse_jsonl(text):
    meta, summary, trials = None, None, []
    for line in text.splitlines():
        rec = json.loads(line)
        kind = rec.pop("type")
        if kind == "meta":
            meta = rec
        elif kind == "trial":
            trials.append(TrialResult(**{k: _unjson_float(v) if k not in _INT_FIELDS else v
                                         for k, v in rec.items()}))
        else:
            summary = rec
    if meta is None or summary is None:
        raise ValueError("report is missing its meta or summary line")
    return ExperimentReport(config=meta["config"], provenance=meta["provenance"],
                            trials=tuple(trials), mean=_unjson_float(summary["mean"]),
                            std=_unjson_float(summary["std"]))


def _parse_csv(text):
    meta, rows = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    if tuple(header) != TRIAL_FIELDS:
        raise ValueError(f"unexpected CSV header {header}")
    trials = tuple(TrialResult(**{k: _parse_num(k, v) for k, v in zip(header, row)})
                   for row in reader)
    return ExperimentReport(config=json.loads(meta["config"]),
                            provenance=json.loads(meta["provenance"]), trials=trials,
                            mean=float(meta["mean"]), std=float(meta["std"]))


def reports_equal(a, b):
    """Field-wise equality that treats NaN as equal to NaN."""
    def same(x, y):
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            return True
        return x == y

    if a.config != b.config or a.provenance != b.provenance or len(a.trials) != len(b.trials):
        return False
    if not (same(a.mean, b.mean) and same(a.std, b.std)):
        return False
    return all(same(getattr(s, k), getattr(t, k))
               for s, t in zip(a.trials, b.trials) for k in TRIAL_FIELDS)


__all__ = [
    "CvResult", "ExperimentConfig", "ExperimentReport", "TimingStats",
    "TrialResult", "config_from_mapping", "cross_validate", "emit_report", "evaluate",
    "prepare_features", "read_experiment_config", "read_report", "reports_equal",
    "run_experiment", "time_query",
]
