"""Command-line entry point (``nrc``).

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

import argparse
import csv
import sys

from nrc import bench
from nrc.classifier import Coder, LabeledDataset, fit, load_model, predict_batch, save_model
from nrc.data_io import load_manifest_data, stratified_sample
from nrc.errors import ConfigError, DataError, NumericalError
from nrc.preprocess import l2_normalize_columns, pca_transform

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _solver_flags(p):
    p.add_argument("--manifest", help="dataset manifest (INI)")
    p.add_argument("--coder", choices=[c.value for c in Coder])
    p.add_argument("--rho", type=float)
    p.add_argument("--lam", type=float, help="ridge/lasso regularization")
    p.add_argument("--max-iters", "-T", type=int, dest="max_iters")
    p.add_argument("--tol", type=float)
    p.add_argument("--pca-dim", type=int, dest="pca_dim")


def _experiment_flags(p):
    p.add_argument("--config", help="experiment config (INI, [experiment] section)")
    _solver_flags(p)
    p.add_argument("--per-class", type=int, dest="per_class")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--cv-folds", type=int, dest="cv_folds")
    p.add_argument("--rho-grid", dest="rho_grid", help="comma-separated values")
    p.add_argument("--lambda-grid", dest="lambda_grid", help="comma-separated values")
    p.add_argument("--no-cv", action="store_true", help="use --rho/--lam as given")
    p.add_argument("--per-trial-cv", action="store_true")
    p.add_argument("--timing", action="store_true", help="record per-query timings")
    p.add_argument("--workers", type=int)


def build_parser():
    parser = _Parser(prog="nrc", description="Representation-based classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a classifier on a sampled training split and save it")
    _experiment_flags(p)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="model file to write")

    p = sub.add_parser("predict", help="label the test split with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", choices=["test", "train"], default="test")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-o", "--output", help="CSV of predictions (default: stdout)")

    p = sub.add_parser("cv", help="cross-validate rho (NNLS) or lambda on one training split")
    _experiment_flags(p)
    p.add_argument("--trial", type=int, default=0)

    p = sub.add_parser("bench", help="run a multi-trial experiment and write a report")
    _experiment_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=bench.REPORT_FORMATS, default="jsonl")

    p = sub.add_parser("report", help="summarize a report written by 'bench'")
    p.add_argument("path")
    return parser


def _experiment_config(args):
    values = {}
    if args.config:
        cfg = bench.read_experiment_config(args.config)
        values = {k: v for k, v in cfg.echo().items() if k not in ("rho_grid", "lambda_grid")}
        values["rho_grid"] = ",".join(map(repr, cfg.rho_grid))
        values["lambda_grid"] = ",".join(map(repr, cfg.lambda_grid))
        values["workers"] = cfg.workers
    for key in ("manifest", "coder", "rho", "lam", "max_iters", "tol", "pca_dim", "per_class",
                "trials", "seed", "cv_folds", "rho_grid", "lambda_grid", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.no_cv:
        values["cross_validate"] = False
    if args.per_trial_cv:
        values["per_trial_cv"] = True
    if args.timing:
        values["timing"] = True
    values = {k: (str(v).lower() if isinstance(v, bool) else v) for k, v in values.items()}
    cfg = bench.config_from_mapping(values)
    if not cfg.manifest:
        raise ConfigError("a dataset manifest is required (--manifest or config 'manifest')")
    # without per_class, fit and cv use the whole training split
    return cfg, "per_class" in values


def _training_split(cfg, sample, trial):
    train_raw, _ = load_manifest_data(cfg.manifest)
    train = LabeledDataset(train_raw.features, train_raw.labels)
    if sample:
        train, _ = stratified_sample(train, cfg.split, trial)
    return train


def cmd_fit(args, out):
    cfg, sample = _experiment_config(args)
    train = _training_split(cfg, sample, args.trial)
    if cfg.cross_validate and len(cfg.grid) > 1:
        cfg = cfg.with_hyperparameter(bench.cross_validate(train, cfg).value)
    Xtr, _, pca = bench.prepare_features(train.features, None, cfg.pca_dim)
    clf = fit(LabeledDataset(Xtr, train.labels), cfg.coder, cfg.solver)
    save_model(args.output, clf, pca)
    print(f"fitted {clf.coder.value} on {clf.n_atoms} samples, {clf.n_classes} classes, "
          f"rho={cfg.solver.rho!r} lam={cfg.solver.lam!r} -> {args.output}", file=out)


def cmd_predict(args, out):
    clf, pca = load_model(args.model)
    train, test = load_manifest_data(args.manifest)
    data = test if args.split == "test" else train
    if data is None:
        raise DataError(f"manifest {args.manifest} has no {args.split} split")
    X = data.features
    if pca is not None:
        X = pca_transform(pca, X)
    X = l2_normalize_columns(X)
    preds = predict_batch(clf, X, workers=args.workers)
    fh = open(args.output, "w", newline="") if args.output else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "label", "predicted"])
        for j, (truth, p) in enumerate(zip(data.labels.tolist(), preds)):
            w.writerow([j, truth, p.label.item() if hasattr(p.label, "item") else p.label])
    finally:
        if args.output:
            fh.close()
    hits = sum(p.label == t for p, t in zip(preds, data.labels))
    acc = hits / len(preds) if preds else float("nan")
    print(f"accuracy {acc!r} ({hits}/{len(preds)})", file=sys.stderr)


def cmd_cv(args, out):
    cfg, sample = _experiment_config(args)
    train = _training_split(cfg, sample, args.trial)
    res = bench.cross_validate(train, cfg)
    for value, score in res.scores:
        print(f"{cfg.grid_name}={value!r}\taccuracy={score!r}", file=out)
    print(f"chosen {cfg.grid_name}={res.value!r}", file=out)


def cmd_bench(args, out):
    cfg, _ = _experiment_config(args)
    report = bench.run_experiment(cfg)
    bench.emit_report(report, args.output, args.format)
    print(f"mean accuracy {report.mean!r} std {report.std!r} over "
          f"{len(report.trials)} trials -> {args.output}", file=out)


def cmd_report(args, out):
    try:
        rep = bench.read_report(args.path)
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(f"cannot read report {args.path}: {exc}") from None
    print(f"provenance: {rep.provenance}", file=out)
    c = rep.config
    print("config: " + ", ".join(f"{k}={c[k]}" for k in sorted(c)), file=out)
    print("trial  accuracy  hyperparameter  n_train  n_test", file=out)
    for t in rep.trials:
        print(f"{t.trial:5d}  {t.accuracy:8.4f}  {t.hyperparameter:14.6g}  {t.n_train:7d}  "
              f"{t.n_test:6d}", file=out)
    print(f"mean {rep.mean:.4f}  std {rep.std:.4f}", file=out)


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "cv": cmd_cv, "bench": cmd_bench,
            "report": cmd_report}


def main(argv=None, out=None):
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        print(f"nrc: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"nrc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"nrc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
