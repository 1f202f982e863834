"""``loadid`` command line: synth, extract, reduce, train, evaluate, run.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every stage reads and writes plain CSV/JSON so stages can be chained by hand;
``--folds K --fold I`` restricts reduce/train to the training rows and
evaluate to the test rows of the same stratified split that ``run`` uses.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import classifier as clf
from .dataset import load_manifest, synth_dataset, write_manifest
from .errors import DataError, LoadIdError, NumericalError
from .evaluation import (
    F_SCORE_FLAVOR,
    ExperimentConfig,
    accuracy,
    classifier_params,
    confusion,
    fit_classifier,
    fold_split,
    macro_f_score,
    predict,
    run_experiment,
)
from .features import Descriptor, DescriptorKind, extract, load_features, save_features
from .reduction import Method, fit_projection, load_projection, project, save_projection
from .scatter import scatter_pair

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
MODEL_FORMAT = "loadid-model v1"

logger = logging.getLogger("loadid")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return value


def _add_fold_args(p):
    p.add_argument("--folds", type=int, help="number of stratified folds (with --fold)")
    p.add_argument("--fold", type=int, help="0-based fold index (with --folds)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loadid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a seeded synthetic dataset (manifest + traces)")
    p.add_argument("--classes", type=_positive_int, required=True)
    p.add_argument("--per-class", type=_positive_int, required=True)
    p.add_argument("--length", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sampling-rate", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("extract", help="windowed time-domain descriptors -> features CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--descriptor", choices=[d.value for d in Descriptor], default="rmsf")
    p.add_argument("--window", type=int, default=128)
    p.add_argument("--sscf-threshold", type=_non_negative_float,
                   help="absolute SSCF threshold (default: 1e-8 x window RMS)")
    p.add_argument("--rmsf-literal", action="store_true",
                   help="RMSF with the sum outside the square root")
    p.add_argument("--out", required=True)

    p = sub.add_parser("reduce", help="fit a projection on features")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=[m.value for m in Method], default="fnpa-qr")
    p.add_argument("--r", type=_positive_int)
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--ridge", type=_non_negative_float)
    p.add_argument("--fuzz-exponent", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="fold split seed")
    _add_fold_args(p)
    p.add_argument("--apply", metavar="PATH", help="also write projected features (all rows)")
    p.add_argument("--dump-scatter", metavar="DIR", help="write W, Yw, Yb as CSV (fnpa-qr)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a classifier on features")
    p.add_argument("--features", required=True)
    p.add_argument("--model", choices=["bdt", "dt", "knn"], default="bdt")
    p.add_argument("--learners", type=_positive_int, help="BDT ensemble size (default 30)")
    p.add_argument("--max-splits", type=_positive_int,
                   help="split budget per tree (default 42000 for bdt, 100 for dt)")
    p.add_argument("--k", type=_positive_int, help="KNN neighbors (default 1)")
    p.add_argument("--weighting", choices=["uniform", "inverse-distance"])
    p.add_argument("--seed", type=int, default=0, help="bootstrap and fold split seed")
    _add_fold_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--seed", type=int, default=0, help="fold split seed")
    _add_fold_args(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="full cross-validated experiment grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    return parser


def _check_folds(args):
    if (args.folds is None) != (args.fold is None):
        raise UsageError("--folds and --fold must be given together")
    if args.folds is not None:
        if args.folds < 2:
            raise UsageError("--folds must be >= 2")
        if not 0 <= args.fold < args.folds:
            raise UsageError(f"--fold must be in 0..{args.folds - 1}")


def _rows(args, labels, part: int):
    """Row indices selected by the fold flags; ``part`` 0 = train, 1 = test."""
    if args.folds is None:
        return np.arange(labels.size)
    return fold_split(labels, args.folds, args.fold, args.seed)[part]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args):
    signals = synth_dataset(args.classes, args.per_class, args.length, args.seed,
                            args.sampling_rate)
    manifest = write_manifest(signals, args.out)
    logger.info("wrote %d signals to %s", len(signals), manifest)


def cmd_extract(args):
    if args.window < 2:
        raise UsageError("--window must be >= 2")
    desc = DescriptorKind.parse(args.descriptor, args.sscf_threshold, args.rmsf_literal)
    features = extract(load_manifest(args.manifest), desc, args.window)
    save_features(features, args.out)


def cmd_reduce(args):
    _check_folds(args)
    F = load_features(args.features)
    Ftr = F.subset(_rows(args, F.labels, 0))
    proj = fit_projection(args.method, Ftr, args.r, args.k, args.ridge, args.fuzz_exponent)
    if args.dump_scatter and proj.method is Method.FNPA_QR:
        pair, model = scatter_pair(Ftr.values, Ftr.labels, proj.fit_metadata["k"])
        out = Path(args.dump_scatter)
        out.mkdir(parents=True, exist_ok=True)
        for name, mat in (("W", model.W), ("Yw", pair.Yw), ("Yb", pair.Yb)):
            np.savetxt(out / f"{name}.csv", mat, delimiter=",", fmt="%.17g")
    save_projection(proj, args.out)
    if args.apply:
        save_features(project(proj, F), args.apply)


def cmd_train(args):
    _check_folds(args)
    F = load_features(args.features)
    given = {"n_learners": args.learners, "max_splits": args.max_splits,
             "k": args.k, "weighting": args.weighting}
    allowed = {"bdt": ("n_learners", "max_splits"), "dt": ("max_splits",),
               "knn": ("k", "weighting")}[args.model]
    stray = [k for k, v in given.items() if v is not None and k not in allowed]
    if stray:
        raise UsageError(f"options not valid for --model {args.model}: {stray}")
    params = classifier_params(args.model, {k: given[k] for k in allowed if given[k] is not None},
                               args.seed)
    C = F.n_classes
    Ftr = F.subset(_rows(args, F.labels, 0))
    model = fit_classifier(args.model, params, Ftr.values, Ftr.labels, C)
    doc = {
        "format": MODEL_FORMAT,
        "kind": args.model,
        "params": params,
        "n_features": F.n_features,
        "n_classes": C,
        "model": model.to_dict(),
    }
    if args.model == "bdt":
        doc["summary"] = clf.ensemble_summary(model, Ftr.values, Ftr.labels)
    _write_json(args.out, doc)


def _load_model(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} file")
    loader = {"bdt": clf.BaggedEnsemble, "dt": clf.DecisionTree, "knn": clf.KNNClassifier}
    return doc, loader[doc["kind"]].from_dict(doc["model"])


def cmd_evaluate(args):
    _check_folds(args)
    doc, model = _load_model(args.model)
    F = load_features(args.features)
    if F.n_features != doc["n_features"]:
        raise DataError(
            f"dimension mismatch: model expects {doc['n_features']} features, got {F.n_features}"
        )
    Fte = F.subset(_rows(args, F.labels, 1))
    cm = confusion(Fte.labels, predict(model, Fte.values), doc["n_classes"])
    _write_json(args.out, {
        "accuracy": accuracy(cm),
        "macro_f_score": macro_f_score(cm),
        "f_score": F_SCORE_FLAVOR,
        "n_scored": cm.total,
        "confusion": cm.counts.tolist(),
    })


def cmd_run(args):
    config = ExperimentConfig.from_file(args.config)
    report = run_experiment(config)
    report.write(args.out_dir)


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "reduce": cmd_reduce,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"loadid {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"loadid {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (LoadIdError, OSError) as exc:
        print(f"loadid {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
