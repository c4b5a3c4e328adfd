"""Classic linear Kalman filtering and the non-learned baselines.

Pure numpy, no autodiff. The Kalman gain is always obtained by solving the
symmetric positive-definite innovation system (never by materializing an
inverse), and posterior covariances are re-symmetrized after every step so
round-off cannot accumulate asymmetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import spd_solve
from .errors import FilterStepError, ShapeMismatchError, SingularMatrixError

__all__ = [
    "GaussianBelief",
    "LinearKfModel",
    "kf_predict",
    "kf_update",
    "kf_filter",
    "default_init",
    "build_cv_model",
    "build_ca_model",
    "measurement_estimates",
    "ema_filter",
    "GridSearchResult",
    "grid_search",
    "grid_table_csv",
]


@dataclass
class GaussianBelief:
    """State estimate as mean (n,) and covariance (n, n).

    The covariance is expected symmetric PSD; filter steps maintain
    symmetry exactly by construction.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.cov = np.asarray(self.cov, dtype=np.float64)
        n = self.mean.shape[0]
        if self.cov.shape != (n, n):
            raise ShapeMismatchError(f"belief: mean {n}, cov {self.cov.shape}")


@dataclass
class LinearKfModel:
    """Time-invariant linear-Gaussian model.

    Parameters
    ----------
    a : (n, n) state transition.
    h : (m, n) measurement map.
    q : (n, n) process noise covariance.
    r : (m, m) measurement noise covariance.
    """

    a: np.ndarray
    h: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ShapeMismatchError(f"a must be square, got {self.a.shape}")
        if self.h.ndim != 2 or self.h.shape[1] != n:
            raise ShapeMismatchError(f"h {self.h.shape} incompatible with state dim {n}")
        m = self.h.shape[0]
        if self.q.shape != (n, n):
            raise ShapeMismatchError(f"q must be ({n}, {n}), got {self.q.shape}")
        if self.r.shape != (m, m):
            raise ShapeMismatchError(f"r must be ({m}, {m}), got {self.r.shape}")

    @property
    def state_dim(self) -> int:
        return self.a.shape[0]

    @property
    def measurement_dim(self) -> int:
        return self.h.shape[0]


def _symmetrized(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def kf_predict(belief: GaussianBelief, model: LinearKfModel) -> GaussianBelief:
    """Time update: mean' = A mean, cov' = A cov A^T + Q."""
    mean = model.a @ belief.mean
    cov = _symmetrized(model.a @ belief.cov @ model.a.T + model.q)
    return GaussianBelief(mean, cov)


def kf_update(belief: GaussianBelief, z: np.ndarray, model: LinearKfModel) -> GaussianBelief:
    """Measurement update via an SPD solve of the innovation system.

    K = P H^T S^{-1} with S = H P H^T + R is computed as the solution of
    S K^T = H P (P symmetric), so no inverse is formed. A singular S
    raises SingularMatrixError.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != model.measurement_dim:
        raise ShapeMismatchError(f"measurement dim {z.shape[0]} vs model {model.measurement_dim}")
    p, h = belief.cov, model.h
    innovation_cov = _symmetrized(h @ p @ h.T + model.r)
    gain = spd_solve(innovation_cov, h @ p).T
    mean = belief.mean + gain @ (z - h @ belief.mean)
    cov = _symmetrized((np.eye(model.state_dim) - gain @ h) @ p)
    return GaussianBelief(mean, cov)


def default_init(model: LinearKfModel, first_measurement: np.ndarray) -> GaussianBelief:
    """First measurement lifted into the state (derivatives zero), identity cov."""
    z = np.asarray(first_measurement, dtype=np.float64).reshape(-1)
    return GaussianBelief(model.h.T @ z, np.eye(model.state_dim))


def kf_filter(
    measurements: np.ndarray,
    model: LinearKfModel,
    init: GaussianBelief | None = None,
) -> list[GaussianBelief]:
    """Run predict/update over a (T, m) measurement sequence.

    Returns the posterior belief after every step (length T). When `init`
    is omitted it derives from the first measurement via `default_init`;
    that first measurement is still processed as step 0. Numerical failures
    are re-raised as FilterStepError with the step index attached.
    """
    measurements = np.asarray(measurements, dtype=np.float64)
    if measurements.ndim != 2:
        raise ShapeMismatchError(f"measurements must be (T, m), got {measurements.shape}")
    if measurements.shape[0] == 0:
        raise ShapeMismatchError("measurements must contain at least one step")
    belief = init if init is not None else default_init(model, measurements[0])
    out: list[GaussianBelief] = []
    for t, z in enumerate(measurements):
        try:
            belief = kf_update(kf_predict(belief, model), z, model)
        except (SingularMatrixError, FloatingPointError) as exc:
            raise FilterStepError(t) from exc
        out.append(belief)
    return out


def measurement_estimates(beliefs: Sequence[GaussianBelief], model: LinearKfModel) -> np.ndarray:
    """Project posterior means into measurement space, (T, m)."""
    return np.array([model.h @ b.mean for b in beliefs])


# ----------------------------------------------------------------------
# model builders
# ----------------------------------------------------------------------


def _kinematic_model(pose_dim: int, order: int, dt: float, q_scale: float, r_scale: float) -> LinearKfModel:
    # State stacks pose and its `order` time derivatives, blockwise:
    # [pose, d(pose)/dt, ...]. The transition is the Taylor stencil and the
    # process noise is the discrete white-noise model, q_scale * I on the
    # highest-derivative block only.
    if pose_dim < 1:
        raise ShapeMismatchError("pose_dim must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q_scale < 0 or r_scale < 0:
        raise ValueError("noise scales must be non-negative")
    blocks = order + 1
    n = pose_dim * blocks
    a = np.eye(n)
    for i in range(blocks):
        coeff = 1.0
        for j in range(i + 1, blocks):
            coeff *= dt / (j - i)  # Taylor coefficient dt^(j-i)/(j-i)!
            a[
                i * pose_dim : (i + 1) * pose_dim,
                j * pose_dim : (j + 1) * pose_dim,
            ] = coeff * np.eye(pose_dim)
    h = np.zeros((pose_dim, n))
    h[:, :pose_dim] = np.eye(pose_dim)
    q = np.zeros((n, n))
    top = (blocks - 1) * pose_dim
    q[top:, top:] = q_scale * np.eye(pose_dim)
    r = r_scale * np.eye(pose_dim)
    return LinearKfModel(a, h, q, r)


def build_cv_model(pose_dim: int, dt: float, q_scale: float, r_scale: float) -> LinearKfModel:
    """Constant-velocity model: state [pose, velocity], H selects pose."""
    return _kinematic_model(pose_dim, 1, dt, q_scale, r_scale)


def build_ca_model(pose_dim: int, dt: float, q_scale: float, r_scale: float) -> LinearKfModel:
    """Constant-acceleration model: state [pose, velocity, acceleration]."""
    return _kinematic_model(pose_dim, 2, dt, q_scale, r_scale)


# ----------------------------------------------------------------------
# exponential moving average
# ----------------------------------------------------------------------


def ema_filter(measurements: np.ndarray, window: int) -> np.ndarray:
    """EMA with alpha = 2/(window+1); the first output equals the first input."""
    if window < 1:
        raise ValueError("window must be >= 1")
    z = np.asarray(measurements, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ShapeMismatchError(f"measurements must be (T, d) with T >= 1, got {z.shape}")
    alpha = 2.0 / (window + 1.0)
    out = np.empty_like(z)
    out[0] = z[0]
    for t in range(1, z.shape[0]):
        out[t] = alpha * z[t] + (1.0 - alpha) * out[t - 1]
    return out


# ----------------------------------------------------------------------
# grid search
# ----------------------------------------------------------------------


@dataclass
class GridSearchResult:
    """Best parameters plus the full error table.

    `table` rows match `header`; the last column is always the mean
    Euclidean error over every step of every training pair.
    """

    family: str
    best: dict
    best_error: float
    header: tuple[str, ...]
    table: list[tuple] = field(default_factory=list)


def _mean_euclidean(estimates: np.ndarray, truth: np.ndarray) -> float:
    return float(np.linalg.norm(estimates - truth, axis=1).mean())


def grid_search(
    train_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    family: str,
    q_grid: Sequence[float] | None = None,
    r_grid: Sequence[float] | None = None,
    window_grid: Sequence[int] | None = None,
    dt: float = 1.0,
) -> GridSearchResult:
    """Exhaustive search for baseline noise scales / EMA window.

    Parameters
    ----------
    train_pairs : sequence of (truth, measurements), each (T, d).
    family : "cv" | "ca" | "ema".
    q_grid, r_grid : noise scale candidates for the Kalman families.
    window_grid : window candidates for the EMA family.

    Grid points are evaluated in ascending parameter order and ties keep
    the earlier (smaller) candidate, so results are deterministic: smallest
    q wins, then smallest r, then smallest window.
    """
    pairs = [
        (np.asarray(t, dtype=np.float64), np.asarray(z, dtype=np.float64))
        for t, z in train_pairs
    ]
    if not pairs:
        raise ValueError("grid_search: no training pairs")
    for truth, z in pairs:
        if truth.shape != z.shape or truth.ndim != 2:
            raise ShapeMismatchError("grid_search: truth/measurement shape mismatch")

    if family == "ema":
        if not window_grid:
            raise ValueError("grid_search: ema needs a window grid")
        header = ("window", "mean_error")
        table = []
        best_w, best_err = None, np.inf
        for w in sorted(int(w) for w in window_grid):
            err = float(
                np.mean([_mean_euclidean(ema_filter(z, w), truth) for truth, z in pairs])
            )
            table.append((w, err))
            if err < best_err:
                best_w, best_err = w, err
        return GridSearchResult("ema", {"window": best_w}, best_err, header, table)

    if family not in ("cv", "ca"):
        raise ValueError(f"grid_search: unknown family {family!r}")
    if not q_grid or not r_grid:
        raise ValueError("grid_search: kalman families need q and r grids")
    build = build_cv_model if family == "cv" else build_ca_model
    pose_dim = pairs[0][0].shape[1]
    header = ("q_scale", "r_scale", "mean_error")
    table = []
    best, best_err = None, np.inf
    for q in sorted(float(q) for q in q_grid):
        for r in sorted(float(r) for r in r_grid):
            model = build(pose_dim, dt, q, r)
            errs = []
            for truth, z in pairs:
                beliefs = kf_filter(z, model)
                errs.append(_mean_euclidean(measurement_estimates(beliefs, model), truth))
            err = float(np.mean(errs))
            table.append((q, r, err))
            if err < best_err:
                best, best_err = {"q_scale": q, "r_scale": r}, err
    return GridSearchResult(family, best, best_err, header, table)


def grid_table_csv(result: GridSearchResult, path) -> None:
    """Write the error table as CSV (one header row, full precision)."""
    lines = [",".join(result.header)]
    for row in result.table:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
