"""Synthetic trajectory datasets with ground truth and noisy measurements.

Two generator families:

* ``gen_linear_cv``: a discrete constant-velocity linear-Gaussian process.
  Per axis, state [pose, velocity] evolves as pose += dt * velocity with
  velocity noise N(0, q) injected each step (the discrete white-noise
  model: process covariance q * I on the velocity block only), and
  measurements are pose + N(0, r). With q = r = 0 truth is exactly
  piecewise linear. Draw order per sequence: initial pose (d), initial
  velocity (d), then (T-1) x d velocity kicks, then T x d measurement
  noises.
* ``gen_oscillator``: per-axis sinusoids amplitude * sin(2 pi * frequency
  * t * dt + phase) with phases drawn uniform on [0, 2 pi); measurements
  add N(0, r). Draw order: d phases, then T x d measurement noises.

Noise scales q and r are variances (deviations are their square roots).
Sequence i of a dataset draws from the Philox stream keyed (seed,
index_offset + i), so train/test splits stay disjoint by offsetting the
index, and the metadata header alone regenerates any file bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetFormatError, ShapeMismatchError
from .kalman import build_cv_model, kf_filter, measurement_estimates
from .rng import normals, philox, uniform

__all__ = [
    "TrajectorySequence",
    "TrajectoryDataset",
    "BurstSpec",
    "gen_linear_cv",
    "gen_oscillator",
    "apply_bursts",
    "oracle_error",
    "save_dataset",
    "load_dataset",
    "DATASET_FORMAT",
    "DATASET_VERSION",
]

DATASET_FORMAT = "trajectory-dataset"
DATASET_VERSION = 1

_INITIAL_VELOCITY_STD = 0.1  # documented: initial velocity ~ N(0, 0.1^2)


@dataclass
class TrajectorySequence:
    truth: np.ndarray  # (T, d)
    measurements: np.ndarray  # (T, d)

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=np.float64)
        self.measurements = np.asarray(self.measurements, dtype=np.float64)
        if self.truth.ndim != 2 or self.truth.shape != self.measurements.shape:
            raise ShapeMismatchError(
                f"truth {self.truth.shape} vs measurements {self.measurements.shape}"
            )


@dataclass
class TrajectoryDataset:
    """Sequences plus the metadata needed to regenerate them."""

    sequences: list[TrajectorySequence]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sequences:
            raise ShapeMismatchError("dataset must contain at least one sequence")
        shape = self.sequences[0].truth.shape
        for s in self.sequences:
            if s.truth.shape != shape:
                raise ShapeMismatchError("all sequences must share (T, d)")

    @property
    def n_sequences(self) -> int:
        return len(self.sequences)

    @property
    def length(self) -> int:
        return self.sequences[0].truth.shape[0]

    @property
    def dim(self) -> int:
        return self.sequences[0].truth.shape[1]

    def train_pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(s.truth, s.measurements) for s in self.sequences]


@dataclass
class BurstSpec:
    """Occlusion-style bursts: 1-based inclusive [start, end] step intervals
    (non-overlapping, in range) whose measurement-noise deviation is
    multiplied by `scale`."""

    intervals: list[tuple[int, int]]
    scale: float

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("burst scale must be non-negative")
        cleaned = []
        for start, end in self.intervals:
            start, end = int(start), int(end)
            if start < 1 or end < start:
                raise ValueError(f"bad burst interval ({start}, {end})")
            cleaned.append((start, end))
        cleaned.sort()
        for (s0, e0), (s1, _) in zip(cleaned, cleaned[1:]):
            if s1 <= e0:
                raise ValueError(f"burst intervals overlap: ({s0},{e0}) and ({s1},...)")
        self.intervals = cleaned

    def validate_for(self, length: int) -> None:
        for start, end in self.intervals:
            if end > length:
                raise ValueError(f"burst interval ({start}, {end}) exceeds T={length}")

    def mask(self, length: int) -> np.ndarray:
        """Boolean (T,) array, True inside bursts (0-based steps)."""
        self.validate_for(length)
        m = np.zeros(length, dtype=bool)
        for start, end in self.intervals:
            m[start - 1 : end] = True
        return m


def _positive_dims(d: int, length: int, n_seq: int) -> None:
    if d < 1 or length < 1 or n_seq < 1:
        raise ValueError("d, T and n_seq must all be >= 1")


def gen_linear_cv(
    d: int,
    length: int,
    n_seq: int,
    q: float,
    r: float,
    dt: float = 1.0,
    seed: int = 0,
    index_offset: int = 0,
) -> TrajectoryDataset:
    """Constant-velocity linear-Gaussian sequences; q and r are variances."""
    _positive_dims(d, length, n_seq)
    if q < 0 or r < 0:
        raise ValueError("noise variances must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_std, r_std = np.sqrt(q), np.sqrt(r)
    sequences = []
    for i in range(n_seq):
        rng = philox(seed, index_offset + i)
        pose = normals(rng, (d,))
        vel = normals(rng, (d,), std=_INITIAL_VELOCITY_STD)
        kicks = normals(rng, (length - 1, d), std=q_std) if length > 1 else np.zeros((0, d))
        noise = normals(rng, (length, d), std=r_std)
        truth = np.empty((length, d))
        truth[0] = pose
        for t in range(1, length):
            vel = vel + kicks[t - 1]
            pose = pose + dt * vel
            truth[t] = pose
        sequences.append(TrajectorySequence(truth, truth + noise))
    metadata = {
        "generator": "linear_cv",
        "d": d,
        "T": length,
        "n_seq": n_seq,
        "q": float(q),
        "r": float(r),
        "dt": float(dt),
        "seed": int(seed),
        "index_offset": int(index_offset),
        "initial_velocity_std": _INITIAL_VELOCITY_STD,
        "bursts": None,
    }
    return TrajectoryDataset(sequences, metadata)


def gen_oscillator(
    d: int,
    length: int,
    n_seq: int,
    amplitude: float,
    frequency: float,
    r: float,
    dt: float = 1.0,
    seed: int = 0,
    index_offset: int = 0,
) -> TrajectoryDataset:
    """Sinusoidal truth with per-axis random phases; r is a variance."""
    _positive_dims(d, length, n_seq)
    if amplitude < 0 or frequency < 0 or r < 0:
        raise ValueError("amplitude, frequency, r must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    r_std = np.sqrt(r)
    times = np.arange(length) * dt
    sequences = []
    for i in range(n_seq):
        rng = philox(seed, index_offset + i)
        phases = uniform(rng, (d,), 0.0, 2.0 * np.pi)
        noise = normals(rng, (length, d), std=r_std)
        truth = amplitude * np.sin(2.0 * np.pi * frequency * times[:, None] + phases[None, :])
        sequences.append(TrajectorySequence(truth, truth + noise))
    metadata = {
        "generator": "oscillator",
        "d": d,
        "T": length,
        "n_seq": n_seq,
        "amplitude": float(amplitude),
        "frequency": float(frequency),
        "r": float(r),
        "dt": float(dt),
        "seed": int(seed),
        "index_offset": int(index_offset),
        "bursts": None,
    }
    return TrajectoryDataset(sequences, metadata)


def apply_bursts(dataset: TrajectoryDataset, spec: BurstSpec, seed: int) -> TrajectoryDataset:
    """Re-sample measurement noise inside burst intervals at scaled deviation.

    Truth is untouched and measurements outside the intervals stay
    bit-identical. The replacement noise for sequence i draws from the
    stream keyed (seed, index_offset + i), deviation = scale * sqrt(r of
    the source dataset). With scale = 1 the result is distributed exactly
    like the source.
    """
    r = dataset.metadata.get("r")
    if r is None:
        raise ValueError("apply_bursts: dataset metadata lacks measurement noise scale 'r'")
    spec.validate_for(dataset.length)
    mask = spec.mask(dataset.length)
    burst_std = spec.scale * float(np.sqrt(r))
    index_offset = int(dataset.metadata.get("index_offset", 0))
    sequences = []
    for i, s in enumerate(dataset.sequences):
        rng = philox(seed, index_offset + i)
        fresh = normals(rng, (int(mask.sum()), dataset.dim), std=burst_std)
        z = s.measurements.copy()
        z[mask] = s.truth[mask] + fresh
        sequences.append(TrajectorySequence(s.truth.copy(), z))
    metadata = dict(dataset.metadata)
    metadata["bursts"] = {
        "intervals": [[int(a), int(b)] for a, b in spec.intervals],
        "scale": float(spec.scale),
        "seed": int(seed),
    }
    return TrajectoryDataset(sequences, metadata)


def oracle_error(dataset: TrajectoryDataset) -> float:
    """Mean Euclidean error of the exact-model Kalman filter.

    Only defined for linear_cv datasets (the generator's model is the
    filter's model); anything else raises.
    """
    meta = dataset.metadata
    if meta.get("generator") != "linear_cv":
        raise ValueError("oracle_error: dataset was not generated by linear_cv")
    model = build_cv_model(dataset.dim, float(meta["dt"]), float(meta["q"]), float(meta["r"]))
    errors = []
    for s in dataset.sequences:
        beliefs = kf_filter(s.measurements, model)
        estimates = measurement_estimates(beliefs, model)
        errors.append(np.linalg.norm(estimates - s.truth, axis=1).mean())
    return float(np.mean(errors))


# ----------------------------------------------------------------------
# file format: one JSON metadata line, then per-sequence CSV blocks
# ----------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(dataset: TrajectoryDataset, path) -> None:
    """Write header + CSV blocks; 17 significant digits round-trip float64
    exactly, so load_dataset(save_dataset(ds)) is bit-identical."""
    d = dataset.dim
    header = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        **dataset.metadata,
    }
    columns = ["t"] + [f"y_{j + 1}" for j in range(d)] + [f"z_{j + 1}" for j in range(d)]
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for i, s in enumerate(dataset.sequences):
        lines.append(f"# sequence {i}")
        lines.append(",".join(columns))
        for t in range(s.truth.shape[0]):
            row = [str(t + 1)]
            row.extend(_fmt(v) for v in s.truth[t])
            row.extend(_fmt(v) for v in s.measurements[t])
            lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> TrajectoryDataset:
    """Parse a dataset file; malformed input raises DatasetFormatError with
    the offending 1-based line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"bad metadata header: {exc}", line=1) from None
    if header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"unknown format {header.get('format')!r}", line=1)
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"unsupported version {header.get('version')!r}", line=1)
    for key in ("n_seq", "T", "d"):
        if key not in header:
            raise DatasetFormatError(f"metadata missing {key!r}", line=1)
    n_seq, length, d = int(header["n_seq"]), int(header["T"]), int(header["d"])
    expected_columns = ["t"] + [f"y_{j + 1}" for j in range(d)] + [f"z_{j + 1}" for j in range(d)]

    sequences = []
    ln = 1  # 0-based index of the next unread line; +1 gives human line numbers
    for i in range(n_seq):
        marker = f"# sequence {i}"
        if ln >= len(lines) or lines[ln].strip() != marker:
            raise DatasetFormatError(f"expected {marker!r}", line=ln + 1)
        ln += 1
        if ln >= len(lines) or lines[ln].split(",") != expected_columns:
            raise DatasetFormatError("bad or missing column header", line=ln + 1)
        ln += 1
        truth = np.empty((length, d))
        meas = np.empty((length, d))
        for t in range(length):
            if ln >= len(lines):
                raise DatasetFormatError(
                    f"sequence {i} truncated at step {t + 1} of {length}", line=ln + 1
                )
            parts = lines[ln].split(",")
            if len(parts) != 1 + 2 * d:
                raise DatasetFormatError(
                    f"expected {1 + 2 * d} columns, got {len(parts)}", line=ln + 1
                )
            try:
                step_index = int(parts[0])
                truth[t] = [float(v) for v in parts[1 : 1 + d]]
                meas[t] = [float(v) for v in parts[1 + d :]]
            except ValueError as exc:
                raise DatasetFormatError(f"bad numeric value: {exc}", line=ln + 1) from None
            if step_index != t + 1:
                raise DatasetFormatError(
                    f"expected step {t + 1}, got {parts[0]!r}", line=ln + 1
                )
            ln += 1
        sequences.append(TrajectorySequence(truth, meas))
    trailing = [l for l in lines[ln:] if l.strip()]
    if trailing:
        raise DatasetFormatError("unexpected trailing content", line=ln + 1)
    metadata = {k: v for k, v in header.items() if k not in ("format", "version")}
    if metadata.get("bursts") is not None:
        metadata["bursts"]["intervals"] = [
            [int(a), int(b)] for a, b in metadata["bursts"]["intervals"]
        ]
    return TrajectoryDataset(sequences, metadata)
