"""Labeled consumption signals: manifest ingestion, windowing and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import DataError, IngestionError, ParseError

__all__ = [
    "RawSignal",
    "LabeledSignalSet",
    "WindowedSignal",
    "SYNTH_SHAPES",
    "synth_class_params",
    "load_manifest",
    "write_manifest",
    "read_trace",
    "window",
    "synth_dataset",
]

MANIFEST_HEADER = ("path", "label", "sampling_rate_hz")


@dataclass(frozen=True)
class RawSignal:
    samples: np.ndarray
    sampling_rate_hz: float
    label: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise DataError(f"{self.source_id}: samples must be one-dimensional")
        if samples.size == 0:
            raise DataError(f"{self.source_id}: empty signal")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"{self.source_id}: non-finite sample values")
        if not self.sampling_rate_hz > 0:
            raise DataError(f"{self.source_id}: sampling_rate_hz must be positive")
        if int(self.label) < 0:
            raise DataError(f"{self.source_id}: label must be non-negative")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class LabeledSignalSet:
    signals: tuple[RawSignal, ...]
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "signals", tuple(self.signals))
        names = tuple(str(c) for c in self.class_names)
        if not names and self.signals:
            names = tuple(str(c) for c in range(max(s.label for s in self.signals) + 1))
        object.__setattr__(self, "class_names", names)
        for s in self.signals:
            if s.label >= len(names):
                raise DataError(
                    f"{s.source_id}: label {s.label} has no class name "
                    f"({len(names)} classes)"
                )

    def __len__(self):
        return len(self.signals)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.signals], dtype=int)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def require_supervised(self):
        """Raise unless at least two distinct classes are present."""
        if np.unique(self.labels).size < 2:
            raise DataError("at least 2 distinct classes are required for a supervised fit")


@dataclass(frozen=True)
class WindowedSignal:
    windows: np.ndarray
    window_length: int
    label: int
    source_id: str = ""

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_trace(path, source_id: str | None = None) -> np.ndarray:
    """Read a single-column ``power`` or two-column ``timestamp,power`` CSV.

    A header line is detected by failing to parse the first line as numbers.
    Row numbers in error messages are 1-based file line numbers.
    """
    path = Path(path)
    source_id = source_id or str(path)
    if not path.is_file():
        raise IngestionError(f"trace file not found: {path}")
    values = []
    n_cols = None
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row]
            if not cells or all(c == "" for c in cells):
                continue
            if lineno == 1 and not all(_is_number(c) for c in cells):
                continue
            if n_cols is None:
                n_cols = len(cells)
                if n_cols not in (1, 2):
                    raise ParseError(
                        f"{source_id}: row {lineno}: expected 1 or 2 columns, got {n_cols}"
                    )
            elif len(cells) != n_cols:
                raise ParseError(
                    f"{source_id}: row {lineno}: expected {n_cols} columns, got {len(cells)}"
                )
            try:
                value = float(cells[-1])
            except ValueError:
                raise ParseError(
                    f"{source_id}: row {lineno}: non-numeric sample {cells[-1]!r}"
                ) from None
            if not math.isfinite(value):
                raise ParseError(f"{source_id}: row {lineno}: non-finite sample {cells[-1]!r}")
            values.append(value)
    if not values:
        raise DataError(f"{source_id}: empty signal")
    return np.array(values, dtype=float)


def load_manifest(manifest_path) -> LabeledSignalSet:
    """Load every trace listed in a ``path,label,sampling_rate_hz`` manifest.

    Relative trace paths are resolved against the manifest's directory. Class
    names are the distinct ``label`` strings in order of first appearance.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise IngestionError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    class_index: dict[str, int] = {}
    signals = []
    with manifest_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ParseError(
                f"{manifest_path}: header must be {','.join(MANIFEST_HEADER)}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"{manifest_path}: row {lineno}: expected 3 columns")
            rel, name, rate = (c.strip() for c in row)
            try:
                rate_hz = float(rate)
            except ValueError:
                raise ParseError(
                    f"{manifest_path}: row {lineno}: bad sampling rate {rate!r}"
                ) from None
            trace_path = Path(rel)
            if not trace_path.is_absolute():
                trace_path = base / trace_path
            samples = read_trace(trace_path, source_id=rel)
            label = class_index.setdefault(name, len(class_index))
            signals.append(RawSignal(samples, rate_hz, label, rel))
    return LabeledSignalSet(tuple(signals), tuple(class_index))


def write_manifest(signals: LabeledSignalSet, out_dir) -> Path:
    """Write ``manifest.csv`` plus one ``power`` trace CSV per signal."""
    out_dir = Path(out_dir)
    trace_dir = out_dir / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.csv"
    rows = []
    for i, s in enumerate(signals.signals):
        rel = f"traces/signal_{i:04d}.csv"
        with (out_dir / rel).open("w", newline="", encoding="utf-8") as fh:
            fh.write("power\n")
            fh.writelines(f"{v!r}\n" for v in s.samples.tolist())
        rows.append((rel, signals.class_names[s.label], repr(float(s.sampling_rate_hz))))
    with manifest.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        writer.writerows(rows)
    return manifest


def window(signal: RawSignal, n: int) -> WindowedSignal:
    """Split a signal into ``floor(M / n)`` consecutive non-overlapping windows.

    The trailing partial window is discarded.
    """
    n = int(n)
    if n < 2:
        raise DataError(f"window length must be >= 2, got {n}")
    m = len(signal)
    if n > m:
        raise DataError(
            f"{signal.source_id}: signal shorter than window ({m} samples < window {n})"
        )
    k = m // n
    windows = signal.samples[: k * n].reshape(k, n)
    return WindowedSignal(windows, n, signal.label, signal.source_id)


# Synthetic appliance classes. Row c of the table is shape SYNTH_SHAPES[c % 5];
# classes beyond the fifth reuse a shape with a shifted power and period.
SYNTH_SHAPES = ("square", "ramp", "compressor", "sine", "burst")
_DUTY = {"square": 0.5, "ramp": 1.0, "compressor": 0.4, "sine": 1.0, "burst": 0.15}


def synth_class_params(c: int) -> dict:
    """Deterministic generator parameters for synthetic class ``c``."""
    shape = SYNTH_SHAPES[c % len(SYNTH_SHAPES)]
    return {
        "shape": shape,
        "base_power_w": 60.0 + 25.0 * c,
        "period": 384 + 128 * ((3 * c) % 7),
        "duty": _DUTY[shape],
    }


def _shape_wave(shape: str, t: np.ndarray, period: int, duty: float) -> np.ndarray:
    phase = (t % period) / period
    if shape == "square":
        return np.where(phase < duty, 1.0, 0.05)
    if shape == "ramp":
        return 0.3 + 0.7 * phase
    if shape == "compressor":
        on = phase < duty
        since_on = phase * period
        spike = 2.0 * np.exp(-since_on / 6.0)
        return np.where(on, 1.0 + spike, 0.08)
    if shape == "sine":
        return 1.0 + 0.5 * np.sin(2.0 * np.pi * phase)
    if shape == "burst":
        return np.where(phase < duty, 1.0, 0.1)
    raise ValueError(f"unknown shape {shape!r}")


def synth_dataset(
    n_classes: int,
    signals_per_class: int,
    signal_length: int,
    seed: int,
    sampling_rate_hz: float = 1.0,
    phase_jitter: float = 0.5,
    gain_jitter: float = 0.15,
) -> LabeledSignalSet:
    """Seeded synthetic load signatures, ``signals_per_class`` per class.

    Each signal is ``power * wave(t + offset) + noise``, clipped at 0 W, with the
    wave from :func:`synth_class_params`. Traces start near switch-on: the
    offset is uniform over the first ``phase_jitter`` of a period. The power is
    the class base power times ``1 + gain_jitter * N(0, 1)`` (rating spread
    between units) and the Gaussian noise has a standard deviation of 3% of
    the base power plus 1 W.
    """
    if n_classes < 2:
        raise DataError("n_classes must be >= 2")
    if signals_per_class < 1 or signal_length < 1:
        raise DataError("signals_per_class and signal_length must be positive")
    if not 0 <= phase_jitter <= 1 or gain_jitter < 0:
        raise DataError("phase_jitter must be in [0, 1] and gain_jitter >= 0")
    rng = np.random.default_rng(seed)
    t = np.arange(signal_length)
    signals = []
    names = []
    for c in range(n_classes):
        p = synth_class_params(c)
        names.append(f"c{c}_{p['shape']}")
        for j in range(signals_per_class):
            offset = rng.integers(0, max(1, int(phase_jitter * p["period"])))
            gain = p["base_power_w"] * (1.0 + gain_jitter * rng.standard_normal())
            noise = rng.normal(0.0, 0.03 * p["base_power_w"] + 1.0, signal_length)
            y = gain * _shape_wave(p["shape"], t + offset, p["period"], p["duty"]) + noise
            signals.append(
                RawSignal(np.maximum(y, 0.0), sampling_rate_hz, c, f"synth/c{c}/{j:04d}")
            )
    return LabeledSignalSet(tuple(signals), tuple(names))
