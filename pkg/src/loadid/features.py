"""Time-domain descriptors computed per window, assembled into feature matrices.

Each descriptor has a scalar form taking one window; :func:`describe_windows`
applies any of them to a ``K x N`` matrix of windows at once. ``extract`` uses
the batched form; tests check it against the scalar ones.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import LabeledSignalSet, window
from .errors import DataError, ParseError

__all__ = [
    "Descriptor",
    "DescriptorKind",
    "FeatureMatrix",
    "WLF_FLOOR",
    "SSCF_RELATIVE_THRESHOLD",
    "rmsf",
    "rmsf_literal",
    "madf",
    "iamf",
    "wlf",
    "sscf",
    "describe_windows",
    "extract",
    "save_features",
    "load_features",
]

WLF_FLOOR = 1e-12
SSCF_RELATIVE_THRESHOLD = 1e-8


class Descriptor(str, enum.Enum):
    RMSF = "rmsf"
    MADF = "madf"
    IAMF = "iamf"
    WLF = "wlf"
    SSCF = "sscf"


@dataclass(frozen=True)
class DescriptorKind:
    """A descriptor choice plus its options.

    ``threshold`` only applies to SSCF; ``None`` selects the relative default
    of ``1e-8 * window RMS``. ``literal`` only applies to RMSF and selects the
    formula with the sum outside the square root.
    """

    kind: Descriptor
    threshold: float | None = None
    literal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Descriptor(self.kind))
        if self.threshold is not None and self.threshold < 0:
            raise DataError("SSCF threshold must be >= 0")

    @classmethod
    def parse(cls, name, threshold=None, literal=False) -> "DescriptorKind":
        if isinstance(name, Descriptor):
            return cls(name, threshold, literal)
        try:
            kind = Descriptor(str(name).lower())
        except ValueError:
            raise DataError(
                f"unknown descriptor {name!r}; expected one of "
                f"{[d.value for d in Descriptor]}"
            ) from None
        return cls(kind, threshold, literal)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def min_window(self) -> int:
        return 3 if self.kind is Descriptor.SSCF else 2 if self.kind is Descriptor.WLF else 1


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    labels: np.ndarray
    descriptor: DescriptorKind | None = None
    window_length: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if values.ndim != 2:
            raise DataError("feature values must be a 2-D matrix")
        if labels.shape != (values.shape[0],):
            raise DataError(
                f"labels ({labels.shape[0]}) not aligned with rows ({values.shape[0]})"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("feature matrix contains non-finite entries")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows, dtype=int)
        return FeatureMatrix(self.values[rows], self.labels[rows], self.descriptor, self.window_length)


def _as_window(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size == 0:
        raise DataError("a window must be a non-empty 1-D vector")
    return y


def rmsf(y) -> float:
    """Root mean square of the window."""
    y = _as_window(y)
    return float(np.sqrt(np.mean(y * y)))


def rmsf_literal(y) -> float:
    """Sum-outside-the-root variant: ``sum(sqrt(y_i**2 / N))``."""
    y = _as_window(y)
    return float(np.sum(np.sqrt(y * y / y.size)))


def madf(y) -> float:
    y = _as_window(y)
    return float(np.mean(np.abs(y - y.mean())))


def iamf(y) -> float:
    """Mean signed half-square plus the window mean; ``sgn(0) = 0``."""
    y = _as_window(y)
    return float(np.mean(0.5 * y * y * np.sign(y)) + y.mean())


def wlf(y) -> float:
    """Natural log of the waveform length, floored at ``WLF_FLOOR``."""
    y = _as_window(y)
    if y.size < 2:
        raise DataError("WLF needs a window of at least 2 samples")
    return float(np.log(max(np.sum(np.abs(np.diff(y))), WLF_FLOOR)))


def _sscf_default_threshold(rms):
    # a zero threshold would count flat (all-zero) stretches
    return np.maximum(SSCF_RELATIVE_THRESHOLD * rms, np.finfo(float).tiny)


def sscf(y, threshold: float | None = None) -> int:
    """Count interior samples where ``(y_i - y_{i-1}) * (y_i - y_{i+1}) >= threshold``."""
    y = _as_window(y)
    if y.size < 3:
        raise DataError("SSCF needs a window of at least 3 samples")
    if threshold is None:
        threshold = float(_sscf_default_threshold(rmsf(y)))
    prod = (y[1:-1] - y[:-2]) * (y[1:-1] - y[2:])
    return int(np.count_nonzero(prod >= threshold))


def describe_windows(windows: np.ndarray, descriptor: DescriptorKind) -> np.ndarray:
    """Apply a descriptor to every row of a ``K x N`` window matrix."""
    w = np.asarray(windows, dtype=float)
    n = w.shape[1]
    if n < descriptor.min_window:
        raise DataError(
            f"{descriptor.name} needs windows of at least {descriptor.min_window} samples"
        )
    kind = descriptor.kind
    if kind is Descriptor.RMSF:
        if descriptor.literal:
            return np.sum(np.sqrt(w * w / n), axis=1)
        return np.sqrt(np.mean(w * w, axis=1))
    if kind is Descriptor.MADF:
        return np.mean(np.abs(w - w.mean(axis=1, keepdims=True)), axis=1)
    if kind is Descriptor.IAMF:
        return np.mean(0.5 * w * w * np.sign(w), axis=1) + w.mean(axis=1)
    if kind is Descriptor.WLF:
        return np.log(np.maximum(np.sum(np.abs(np.diff(w, axis=1)), axis=1), WLF_FLOOR))
    if kind is Descriptor.SSCF:
        prod = (w[:, 1:-1] - w[:, :-2]) * (w[:, 1:-1] - w[:, 2:])
        if descriptor.threshold is None:
            thr = _sscf_default_threshold(np.sqrt(np.mean(w * w, axis=1)))[:, None]
        else:
            thr = descriptor.threshold
        return np.count_nonzero(prod >= thr, axis=1).astype(float)
    raise AssertionError(kind)


def extract(signals: LabeledSignalSet, descriptor: DescriptorKind, n: int) -> FeatureMatrix:
    """Row ``i`` holds the descriptor of each window of signal ``i``.

    All signals must yield the same number of windows.
    """
    if not len(signals):
        raise DataError("no signals to extract features from")
    windowed = [window(s, n) for s in signals.signals]
    counts = np.array([w.n_windows for w in windowed])
    if np.any(counts != counts[0]):
        common = np.bincount(counts).argmax()
        bad = [w.source_id for w in windowed if w.n_windows != common]
        raise DataError(
            f"signals yield unequal window counts at window {n} "
            f"(expected {common}); offending: {', '.join(bad)}"
        )
    values = np.vstack([describe_windows(w.windows, descriptor) for w in windowed])
    return FeatureMatrix(values, signals.labels, descriptor, int(n))


def save_features(features: FeatureMatrix, path) -> None:
    """Write ``label,f1..fK`` CSV with round-trippable float formatting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{j + 1}" for j in range(features.n_features)])
        for label, row in zip(features.labels.tolist(), features.values.tolist()):
            writer.writerow([label] + [repr(v) for v in row])


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"features file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "label" or len(header) < 2:
            raise ParseError(f"{path}: header must be label,f1..fK")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {lineno}: expected {len(header)} columns")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: non-numeric value") from None
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return FeatureMatrix(np.array(rows), np.array(labels))
