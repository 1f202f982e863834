"""Cross-validated scoring of descriptor x reducer x classifier grids.

Reducers are fitted on the training folds only; the classifier sees the
reduced training rows. Accuracy and macro F1 are averaged over folds and a
pooled confusion matrix is kept per grid cell.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import classifier as clf
from .dataset import LabeledSignalSet, load_manifest, synth_dataset
from .errors import DataError, LoadIdError
from .features import DescriptorKind, FeatureMatrix, extract
from .reduction import Method, Projection, fit_projection, project

__all__ = [
    "ConfusionMatrix",
    "CellResult",
    "ExperimentConfig",
    "ExperimentReport",
    "REPORT_COLUMNS",
    "TIMING_COLUMNS",
    "confusion",
    "accuracy",
    "macro_f_score",
    "stratified_kfold",
    "fold_split",
    "fit_reducer",
    "fit_classifier",
    "predict",
    "classifier_params",
    "evaluate_cell",
    "run_experiment",
    "load_dataset",
]

logger = logging.getLogger(__name__)

F_SCORE_FLAVOR = "macro-averaged F1 (per-class F = 0 when precision + recall = 0)"


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise DataError(f"length mismatch: {y_true.size} true vs {y_pred.size} predicted labels")
    for name, v in (("true", y_true), ("predicted", y_pred)):
        if v.size and (v.min() < 0 or v.max() >= n_classes):
            raise DataError(f"{name} label out of range for {n_classes} classes")
    counts = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def macro_f_score(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("empty confusion matrix")
    tp = np.diag(cm.counts).astype(float)
    predicted = cm.counts.sum(axis=0)
    actual = cm.counts.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f.mean())


def stratified_kfold(labels, k_folds: int, seed: int):
    """Stratified folds as a list of ``(train_indices, test_indices)``.

    Each class is shuffled with the seeded generator and dealt round-robin
    over the folds; the dealing position carries over between classes so
    fold sizes stay balanced.
    """
    labels = np.asarray(labels, dtype=int)
    if k_folds < 2:
        raise DataError("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=int)
    start = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < k_folds:
            raise DataError(f"class {c} has {idx.size} samples, fewer than {k_folds} folds")
        idx = rng.permutation(idx)
        fold_of[idx] = (start + np.arange(idx.size)) % k_folds
        start = (start + idx.size) % k_folds
    everything = np.arange(labels.size)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(k_folds)]


def fold_split(labels, k_folds: int, fold: int, seed: int):
    folds = stratified_kfold(labels, k_folds, seed)
    if not 0 <= fold < k_folds:
        raise DataError(f"fold must be in 0..{k_folds - 1}, got {fold}")
    return folds[fold]


# --------------------------------------------------------------------------
# model construction

CLASSIFIER_DEFAULTS = {
    "bdt": {"n_learners": clf.BDT_LEARNERS, "max_splits": clf.BDT_MAX_SPLITS},
    "dt": {"max_splits": 100},
    "knn": {"k": 1, "weighting": "uniform"},
}


def classifier_params(kind: str, params: dict | None, seed: int) -> dict:
    """Defaults merged with user params; BDT gets ``seed`` unless given one."""
    kind = str(kind).lower()
    if kind not in CLASSIFIER_DEFAULTS:
        raise DataError(f"unknown classifier {kind!r}; expected one of {sorted(CLASSIFIER_DEFAULTS)}")
    merged = dict(CLASSIFIER_DEFAULTS[kind])
    if kind == "bdt":
        merged["seed"] = int(seed)
    unknown = set(params or {}) - set(merged)
    if unknown:
        raise DataError(f"unknown {kind} parameters: {sorted(unknown)}")
    merged.update(params or {})
    return merged


def fit_classifier(kind: str, params: dict, X, y, n_classes: int):
    """Fit ``kind`` with fully resolved ``params`` (see :func:`classifier_params`)."""
    if kind == "bdt":
        return clf.fit_bdt(X, y, params["n_learners"], params["max_splits"],
                           params["seed"], n_classes)
    if kind == "dt":
        return clf.fit_tree(X, y, params["max_splits"], n_classes=n_classes)
    if kind == "knn":
        return clf.fit_knn(X, y, params["k"], params["weighting"], n_classes)
    raise DataError(f"unknown classifier {kind!r}")


def predict(model, X) -> np.ndarray:
    if isinstance(model, clf.BaggedEnsemble):
        return clf.predict_bdt(model, X)
    if isinstance(model, clf.DecisionTree):
        return clf.predict_tree(model, X)
    if isinstance(model, clf.KNNClassifier):
        return clf.predict_knn(model, X)
    raise TypeError(f"not a fitted classifier: {type(model).__name__}")


def fit_reducer(spec: dict, F: FeatureMatrix) -> Projection | None:
    """Fit the reducer described by ``spec``; ``method: none`` returns ``None``."""
    method = str(spec.get("method", "none")).lower()
    if method == "none":
        return None
    return fit_projection(
        Method.parse(method), F, spec.get("r"), spec.get("k"), spec.get("ridge"),
        spec.get("fuzz_exponent", 1.0),
    )


# --------------------------------------------------------------------------
# reports

REPORT_COLUMNS = (
    "descriptor", "window_length", "reducer", "reducer_params", "r", "classifier",
    "classifier_params", "fold_count", "seed", "accuracy", "macro_f_score", "error",
    "reducer_fit_time_s", "reducer_transform_time_s", "fit_time_s", "predict_time_s",
)
TIMING_COLUMNS = (
    "reducer_fit_time_s", "reducer_transform_time_s", "fit_time_s", "predict_time_s",
)


@dataclass
class CellResult:
    descriptor: str
    window_length: int
    reducer: str
    reducer_params: dict
    classifier: str
    classifier_params: dict
    fold_count: int
    seed: int
    r: int | None = None
    accuracy: float | None = None
    macro_f_score: float | None = None
    fold_accuracies: list = field(default_factory=list)
    fold_f_scores: list = field(default_factory=list)
    confusion: list | None = None
    reducer_fit_time_s: float = 0.0
    reducer_transform_time_s: float = 0.0
    fit_time_s: float = 0.0
    predict_time_s: float = 0.0
    error: str | None = None

    def csv_row(self) -> list:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, dict):
                return json.dumps(v, sort_keys=True)
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return [fmt(getattr(self, c)) for c in REPORT_COLUMNS]


@dataclass
class ExperimentReport:
    records: list
    config: dict = field(default_factory=dict)
    f_score: str = F_SCORE_FLAVOR
    reducer_fit_scope: str = "training folds only"

    def to_dict(self) -> dict:
        return {
            "f_score": self.f_score,
            "reducer_fit_scope": self.reducer_fit_scope,
            "config": self.config,
            "records": [asdict(r) for r in self.records],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls([CellResult(**r) for r in d["records"]], d.get("config", {}),
                   d.get("f_score", F_SCORE_FLAVOR),
                   d.get("reducer_fit_scope", "training folds only"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.records:
            writer.writerow(r.csv_row())
        return buf.getvalue()

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        js, cs = out_dir / "report.json", out_dir / "report.csv"
        js.write_text(self.to_json(), encoding="utf-8")
        cs.write_text(self.to_csv(), encoding="utf-8")
        return js, cs


# --------------------------------------------------------------------------
# experiment grid

@dataclass
class ExperimentConfig:
    dataset: object
    descriptors: list = field(default_factory=lambda: ["rmsf"])
    window_lengths: list = field(default_factory=lambda: [128])
    reducers: list = field(default_factory=lambda: [{"method": "fnpa-qr"}])
    classifiers: list = field(default_factory=lambda: [{"kind": "bdt"}])
    folds: int = 10
    seed: int = 0
    sscf_threshold: float | None = None
    rmsf_literal: bool = False
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise DataError("config needs a 'dataset' entry")
        cfg = cls(**d, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(data, path.parent)

    def validate(self):
        if int(self.folds) < 2:
            raise DataError("folds must be >= 2")
        for name in self.descriptors:
            DescriptorKind.parse(name)
        for n in self.window_lengths:
            if int(n) < 2:
                raise DataError(f"window length must be >= 2, got {n}")
        for spec in self.reducers:
            method = str(spec.get("method", "none")).lower()
            if method != "none":
                Method.parse(method)
        for spec in self.classifiers:
            classifier_params(spec.get("kind", "bdt"), spec.get("params"), self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def load_dataset(spec, base_dir=".", default_seed: int = 0) -> LabeledSignalSet:
    """Resolve a config ``dataset`` entry: a manifest path, ``"synth:{...}"`` or ``{"synth": {...}}``."""
    if isinstance(spec, str) and spec.startswith("synth:"):
        try:
            spec = {"synth": json.loads(spec[len("synth:"):])}
        except json.JSONDecodeError as exc:
            raise DataError(f"bad synth dataset spec: {exc}") from None
    if isinstance(spec, dict):
        if "synth" not in spec:
            raise DataError("dataset object must have a 'synth' entry")
        p = dict(spec["synth"])
        p.setdefault("seed", default_seed)
        try:
            return synth_dataset(**p)
        except TypeError as exc:
            raise DataError(f"bad synth dataset parameters: {exc}") from None
    path = Path(spec)
    if not path.is_absolute():
        path = Path(base_dir) / path
    return load_manifest(path)


def evaluate_cell(F: FeatureMatrix, reducer: dict, classifier: dict, folds: int, seed: int,
                  n_classes: int | None = None, keep_projections: bool = False):
    """Cross-validate one reducer/classifier pair on a feature matrix.

    Returns
    -------
    CellResult, plus the list of per-fold projections when ``keep_projections``.
    """
    kind = str(classifier.get("kind", "bdt")).lower()
    params = classifier_params(kind, classifier.get("params"), seed)
    reducer = dict(reducer)
    method = str(reducer.get("method", "none")).lower()
    C = F.n_classes if n_classes is None else n_classes
    result = CellResult(
        descriptor=F.descriptor.name if F.descriptor else "",
        window_length=int(F.window_length or 0),
        reducer=method,
        reducer_params={k: v for k, v in reducer.items() if k != "method"},
        classifier=kind,
        classifier_params=params,
        fold_count=int(folds),
        seed=int(seed),
    )
    projections = []
    pooled = ConfusionMatrix(np.zeros((C, C), dtype=int))
    try:
        for train, test in stratified_kfold(F.labels, folds, seed):
            t0 = time.perf_counter()
            proj = fit_reducer(reducer, F.subset(train))
            t1 = time.perf_counter()
            # fitted on training rows only; projecting every row keeps results
            # bit-identical to the CLI's reduce --apply path
            Fp = F if proj is None else project(proj, F)
            Ftr, Fte = Fp.subset(train), Fp.subset(test)
            if proj is not None:
                result.r = proj.r
            t2 = time.perf_counter()
            model = fit_classifier(kind, params, Ftr.values, Ftr.labels, C)
            t3 = time.perf_counter()
            pred = predict(model, Fte.values)
            t4 = time.perf_counter()
            cm = confusion(Fte.labels, pred, C)
            pooled = pooled + cm
            result.fold_accuracies.append(accuracy(cm))
            result.fold_f_scores.append(macro_f_score(cm))
            result.reducer_fit_time_s += t1 - t0
            result.reducer_transform_time_s += t2 - t1
            result.fit_time_s += t3 - t2
            result.predict_time_s += t4 - t3
            projections.append(proj)
        if method == "none":
            result.r = F.n_features
        result.accuracy = float(np.mean(result.fold_accuracies))
        result.macro_f_score = float(np.mean(result.fold_f_scores))
        result.confusion = pooled.counts.tolist()
        for name in TIMING_COLUMNS:
            setattr(result, name, getattr(result, name) / folds)
    except (LoadIdError, np.linalg.LinAlgError) as exc:
        logger.warning("cell %s/%s failed: %s", method, kind, exc)
        result.error = f"{type(exc).__name__}: {exc}"
        result.accuracy = result.macro_f_score = None
    if keep_projections:
        return result, projections
    return result


def run_experiment(config: ExperimentConfig, signals: LabeledSignalSet | None = None) -> ExperimentReport:
    """Evaluate every descriptor x window x reducer x classifier cell in config order."""
    if signals is None:
        signals = load_dataset(config.dataset, config.base_dir, config.seed)
    signals.require_supervised()
    C = signals.n_classes
    records = []
    for name in config.descriptors:
        desc = DescriptorKind.parse(name, config.sscf_threshold, config.rmsf_literal)
        for n in config.window_lengths:
            try:
                F = extract(signals, desc, int(n))
            except LoadIdError as exc:
                for red in config.reducers:
                    for c in config.classifiers:
                        kind = str(c.get("kind", "bdt")).lower()
                        records.append(CellResult(
                            desc.name, int(n), str(red.get("method", "none")).lower(),
                            {k: v for k, v in red.items() if k != "method"}, kind,
                            classifier_params(kind, c.get("params"), config.seed),
                            int(config.folds), int(config.seed),
                            error=f"{type(exc).__name__}: {exc}",
                        ))
                continue
            for red in config.reducers:
                for c in config.classifiers:
                    records.append(evaluate_cell(F, red, c, int(config.folds), int(config.seed), C))
    return ExperimentReport(records, config.to_dict())
