"""Evaluation metrics for trajectory estimates.

All metrics compare an estimate array against ground truth of the same
shape, per step: Euclidean error statistics across every (sequence, step)
pair, plus per-dimension RMSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError

__all__ = [
    "euclidean_errors",
    "MethodMetrics",
    "compute_metrics",
    "metrics_to_csv",
    "metrics_to_text",
]


def euclidean_errors(truth: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    """Per-step Euclidean distances. Inputs (T, d) or stacks (N, T, d);
    output is flattened over everything but the last axis."""
    truth = np.asarray(truth, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if truth.shape != estimate.shape:
        raise ShapeMismatchError(f"truth {truth.shape} vs estimate {estimate.shape}")
    diff = (truth - estimate).reshape(-1, truth.shape[-1])
    return np.sqrt((diff * diff).sum(axis=1))


@dataclass
class MethodMetrics:
    method: str
    mean_error: float
    median_error: float
    rmse: tuple[float, ...]  # one entry per dimension


def compute_metrics(method: str, truth: np.ndarray, estimate: np.ndarray) -> MethodMetrics:
    errors = euclidean_errors(truth, estimate)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, np.asarray(truth).shape[-1])
    estimate = np.asarray(estimate, dtype=np.float64).reshape(truth.shape)
    per_dim = np.sqrt(((truth - estimate) ** 2).mean(axis=0))
    return MethodMetrics(
        method=method,
        mean_error=float(errors.mean()),
        median_error=float(np.median(errors)),
        rmse=tuple(float(v) for v in per_dim),
    )


def metrics_to_csv(rows: list[MethodMetrics]) -> str:
    if not rows:
        raise ValueError("no metrics rows")
    dim = len(rows[0].rmse)
    header = ["method", "mean_error", "median_error"] + [f"rmse_{i + 1}" for i in range(dim)]
    lines = [",".join(header)]
    for row in rows:
        if len(row.rmse) != dim:
            raise ShapeMismatchError("metrics rows disagree on dimension")
        cells = [row.method, repr(row.mean_error), repr(row.median_error)]
        cells += [repr(v) for v in row.rmse]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def metrics_to_text(rows: list[MethodMetrics]) -> str:
    """Aligned table for terminal display, 6 significant digits."""
    if not rows:
        raise ValueError("no metrics rows")
    dim = len(rows[0].rmse)
    header = ["method", "mean", "median"] + [f"rmse[{i + 1}]" for i in range(dim)]
    table = [header]
    for row in rows:
        cells = [row.method, f"{row.mean_error:.6g}", f"{row.median_error:.6g}"]
        cells += [f"{v:.6g}" for v in row.rmse]
        table.append(cells)
    widths = [max(len(r[c]) for r in table) for c in range(len(header))]
    lines = []
    for r in table:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
