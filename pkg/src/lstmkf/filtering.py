"""Kalman filtering with LSTM-learned dynamics and noise covariances.

Three recurrent modules drive the filter, all mapping R^d -> R^d:

* the transition net ``f`` predicts the next state from the previous
  estimate:  y'_t = f(y_{t-1});
* the process-noise net consumes y'_t and emits the log-diagonal of Q_t;
* the measurement-noise net consumes z_t and emits the log-diagonal of R_t.

Log-diagonals are clamped to [-10, 10] before exponentiation, which keeps
both covariances positive definite and bounds the innovation system safely
above the Cholesky pivot floor. The measurement map is the identity, so the
update is

    K_t = P'_t (P'_t + R_t)^{-1}        (SPD solve, no inverse)
    y_t = y'_t + K_t (z_t - y'_t)
    P_t = (I - K_t) P'_t

and the covariance prediction linearizes the transition net around the
previous estimate:  P'_t = F P_{t-1} F^T + Q_t  with F = df/dy at y_{t-1},
computed by one reverse pass per state component and treated as a constant
(detached) by the backward pass. Covariances are re-symmetrized after every
step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tape, Tensor
from .errors import (
    FilterStepError,
    NonFiniteOutputError,
    ShapeMismatchError,
    SingularMatrixError,
)
from .nets import LstmState, NetModule, build_net_module, module_forward
from .rng import philox

__all__ = [
    "LOG_COV_MIN",
    "LOG_COV_MAX",
    "LstmKfParams",
    "LstmKfRuntimeState",
    "StepRecord",
    "FilterTrace",
    "build_lstm_kf",
    "initial_state",
    "module_jacobian",
    "predict",
    "update",
    "step",
    "rollout",
    "filter_sequence",
    "loss",
]

LOG_COV_MIN = -10.0
LOG_COV_MAX = 10.0


@dataclass
class LstmKfParams:
    """The three learned modules; all must map the state dim to itself."""

    f_module: NetModule
    q_module: NetModule
    r_module: NetModule

    def __post_init__(self):
        d = self.f_module.output_size
        for name in ("f_module", "q_module", "r_module"):
            m = getattr(self, name)
            if m.input_size != d or m.output_size != d:
                raise ShapeMismatchError(
                    f"{name} maps {m.input_size} -> {m.output_size}, expected {d} -> {d}"
                )

    @property
    def dim(self) -> int:
        return self.f_module.output_size

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, module in (
            ("f", self.f_module),
            ("q", self.q_module),
            ("r", self.r_module),
        ):
            out.extend((f"{prefix}.{name}", t) for name, t in module.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def build_lstm_kf(dim: int, size: str = "small", seed: int = 0) -> LstmKfParams:
    """Fresh parameters; one Philox stream initializes all three modules.

    size="small": every module is one LSTM layer of 16 plus a linear head.
    size="big": transition net 3x1024 with dropout keep 0.7 and a
    1024->1024->dim head, noise nets one LSTM layer of 256.
    """
    rng_seed = int(seed)
    if size == "small":
        shapes = [([16], [dim], 1.0)] * 3
    elif size == "big":
        shapes = [
            ([1024, 1024, 1024], [1024, 1024, dim], 0.7),
            ([256], [dim], 1.0),
            ([256], [dim], 1.0),
        ]
    else:
        raise ValueError(f"unknown size {size!r}")
    modules = []
    for offset, (hidden, linear, keep) in enumerate(shapes):
        modules.append(
            build_net_module(dim, hidden, linear, dropout_keep=keep, seed=rng_seed * 3 + offset)
        )
    return LstmKfParams(*modules)


@dataclass
class LstmKfRuntimeState:
    """Belief (mean, cov) plus the recurrent states of the three modules."""

    mean: Tensor  # (d, 1)
    cov: Tensor  # (d, d)
    f_state: LstmState
    q_state: LstmState
    r_state: LstmState
    t: int = 0

    def detach(self) -> "LstmKfRuntimeState":
        """Carry values across a truncation boundary, cutting gradients."""
        return LstmKfRuntimeState(
            mean=self.mean.detach(),
            cov=self.cov.detach(),
            f_state=self.f_state.detach(),
            q_state=self.q_state.detach(),
            r_state=self.r_state.detach(),
            t=self.t,
        )


def initial_state(first_measurement: np.ndarray, params: LstmKfParams) -> LstmKfRuntimeState:
    """Belief mean = first measurement, covariance = identity, zero
    recurrent states, t = 0 (the first measurement is still filtered)."""
    z = np.asarray(first_measurement, dtype=np.float64).reshape(-1)
    if z.shape[0] != params.dim:
        raise ShapeMismatchError(f"measurement dim {z.shape[0]} vs filter dim {params.dim}")
    return LstmKfRuntimeState(
        mean=Tensor(z.reshape(-1, 1)),
        cov=Tensor(np.eye(params.dim)),
        f_state=LstmState.zeros(params.f_module),
        q_state=LstmState.zeros(params.q_module),
        r_state=LstmState.zeros(params.r_module),
        t=0,
    )


def module_jacobian(module: NetModule, x_value: np.ndarray, state: LstmState) -> np.ndarray:
    """Jacobian of the module's eval-mode step output w.r.t. its input.

    The recurrent state is held fixed (it belongs to the past); the step is
    re-run on a private tape and one reverse pass per output component
    extracts a Jacobian row.
    """
    tape = Tape()
    x = Tensor(np.asarray(x_value, dtype=np.float64).reshape(-1, 1))
    y, _ = module_forward(tape, module, x, state.detach())
    rows = y.shape[0]
    jac = np.empty((rows, x.shape[0]))
    basis = np.zeros((rows, 1))
    for i in range(rows):
        basis[:] = 0.0
        basis[i, 0] = 1.0
        grads = tape.backward(y, seed=basis)
        g = grads.get(x)
        jac[i, :] = 0.0 if g is None else g[:, 0]
    return jac


def _symmetrize(tape: Tape, m: Tensor) -> Tensor:
    return tape.scale(tape.add(m, tape.transpose(m)), 0.5)


def _require_finite(t: Tensor, context: str) -> None:
    finite = np.isfinite(t.value)
    if not finite.all():
        raise NonFiniteOutputError(int(np.argmin(finite.ravel())), context)


def _clamped_diag_cov(tape: Tape, raw: Tensor) -> Tensor:
    return tape.diag(tape.exp(tape.clip(raw, LOG_COV_MIN, LOG_COV_MAX)))


def predict(
    tape: Tape,
    state: LstmKfRuntimeState,
    params: LstmKfParams,
    frozen_jacobian: np.ndarray | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor, LstmKfRuntimeState]:
    """Time update.

    Returns (y', P', Q_t, state') where state' carries the advanced
    transition/process-noise recurrent states; the belief in state' is
    untouched until `update` replaces it. `frozen_jacobian` substitutes a
    precomputed F (used by the finite-difference harness so the checked
    function matches the detached-F gradient exactly).
    """
    y_prev = state.mean
    y_prime, f_state = module_forward(
        tape, params.f_module, y_prev, state.f_state, training=training, rng=rng
    )
    _require_finite(y_prime, f"transition output at t={state.t}")
    if frozen_jacobian is None:
        jac = module_jacobian(params.f_module, y_prev.value, state.f_state)
    else:
        jac = np.asarray(frozen_jacobian, dtype=np.float64)
    q_raw, q_state = module_forward(
        tape, params.q_module, y_prime, state.q_state, training=training, rng=rng
    )
    q_hat = _clamped_diag_cov(tape, q_raw)
    jac_c = Tensor(jac)  # constant: F is detached from the backward pass
    p_prime = tape.add(
        tape.matmul(tape.matmul(jac_c, state.cov), tape.transpose(jac_c)), q_hat
    )
    p_prime = _symmetrize(tape, p_prime)
    state2 = replace(state, f_state=f_state, q_state=q_state)
    return y_prime, p_prime, q_hat, state2


def update(
    tape: Tape,
    y_prime: Tensor,
    p_prime: Tensor,
    z: np.ndarray | Tensor,
    r_state: LstmState,
    params: LstmKfParams,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor, Tensor, LstmState]:
    """Measurement update; returns (y, P, K, R_t, r_state')."""
    d = params.dim
    z_t = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float64).reshape(-1, 1))
    if z_t.shape != (d, 1):
        raise ShapeMismatchError(f"measurement {z_t.shape} vs filter dim {d}")
    r_raw, r_state2 = module_forward(
        tape, params.r_module, z_t, r_state, training=training, rng=rng
    )
    r_hat = _clamped_diag_cov(tape, r_raw)
    innovation_cov = tape.add(p_prime, r_hat)
    gain_t = tape.solve_spd(innovation_cov, tape.transpose(p_prime))
    gain = tape.transpose(gain_t)
    innovation = tape.sub(z_t, y_prime)
    y = tape.add(y_prime, tape.matmul(gain, innovation))
    posterior = tape.matmul(tape.sub(Tensor(np.eye(d)), gain), p_prime)
    p = _symmetrize(tape, posterior)
    return y, p, gain, r_hat, r_state2


@dataclass
class StepRecord:
    """On-tape estimate nodes plus numpy snapshots of the diagnostics."""

    filtered: Tensor
    predicted: Tensor
    gain: np.ndarray
    process_noise_diag: np.ndarray
    measurement_noise_diag: np.ndarray
    cov: np.ndarray
    prior_cov: np.ndarray


def step(
    tape: Tape,
    state: LstmKfRuntimeState,
    z: np.ndarray,
    params: LstmKfParams,
    frozen_jacobian: np.ndarray | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[LstmKfRuntimeState, StepRecord]:
    y_prime, p_prime, q_hat, st = predict(
        tape, state, params, frozen_jacobian=frozen_jacobian, training=training, rng=rng
    )
    y, p, gain, r_hat, r_state = update(
        tape, y_prime, p_prime, z, st.r_state, params, training=training, rng=rng
    )
    st = replace(st, mean=y, cov=p, r_state=r_state, t=st.t + 1)
    record = StepRecord(
        filtered=y,
        predicted=y_prime,
        gain=gain.value.copy(),
        process_noise_diag=np.diag(q_hat.value).copy(),
        measurement_noise_diag=np.diag(r_hat.value).copy(),
        cov=p.value.copy(),
        prior_cov=p_prime.value.copy(),
    )
    return st, record


def rollout(
    tape: Tape,
    state: LstmKfRuntimeState,
    measurements: np.ndarray,
    params: LstmKfParams,
    frozen_jacobians: np.ndarray | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[LstmKfRuntimeState, list[StepRecord]]:
    """Filter a (T, d) block on one tape, starting from `state`.

    Step failures (singular innovation, non-finite outputs) are re-raised
    as FilterStepError carrying the absolute step index.
    """
    records = []
    for k in range(measurements.shape[0]):
        jac = None if frozen_jacobians is None else frozen_jacobians[k]
        try:
            state, record = step(
                tape, state, measurements[k], params,
                frozen_jacobian=jac, training=training, rng=rng,
            )
        except (SingularMatrixError, NonFiniteOutputError, FloatingPointError) as exc:
            raise FilterStepError(state.t) from exc
        records.append(record)
    return state, records


@dataclass
class FilterTrace:
    """Stacked per-step outputs of a full filtering pass."""

    filtered: np.ndarray  # (T, d) posterior means
    predicted: np.ndarray  # (T, d) prior means
    gains: np.ndarray  # (T, d, d)
    process_noise_diag: np.ndarray  # (T, d)
    measurement_noise_diag: np.ndarray  # (T, d)
    covariances: np.ndarray  # (T, d, d) posterior
    prior_covariances: np.ndarray  # (T, d, d)

    def __len__(self) -> int:
        return self.filtered.shape[0]


def filter_sequence(
    measurements: np.ndarray,
    params: LstmKfParams,
    init: LstmKfRuntimeState | None = None,
    frozen_jacobians: np.ndarray | None = None,
) -> FilterTrace:
    """Eval-mode filtering of a whole (T, d) sequence.

    The state initializes from the first measurement unless `init` is
    given; every measurement (including the first) is filtered, so all
    trace arrays have length T.
    """
    z = np.asarray(measurements, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ShapeMismatchError(f"measurements must be (T, d), got {z.shape}")
    state = init if init is not None else initial_state(z[0], params)
    tape = Tape()
    _, records = rollout(tape, state, z, params, frozen_jacobians=frozen_jacobians)
    return FilterTrace(
        filtered=np.array([r.filtered.value[:, 0] for r in records]),
        predicted=np.array([r.predicted.value[:, 0] for r in records]),
        gains=np.array([r.gain for r in records]),
        process_noise_diag=np.array([r.process_noise_diag for r in records]),
        measurement_noise_diag=np.array([r.measurement_noise_diag for r in records]),
        covariances=np.array([r.cov for r in records]),
        prior_covariances=np.array([r.prior_cov for r in records]),
    )


def loss(truth: np.ndarray, trace: FilterTrace, lam: float = 0.8) -> float:
    """Composite objective: mean over steps of
    ||y - filtered||^2 + lam * ||y - predicted||^2."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    y = np.asarray(truth, dtype=np.float64)
    if y.shape != trace.filtered.shape:
        raise ShapeMismatchError(f"truth {y.shape} vs trace {trace.filtered.shape}")
    filtered_err = ((y - trace.filtered) ** 2).sum(axis=1)
    predicted_err = ((y - trace.predicted) ** 2).sum(axis=1)
    return float(np.mean(filtered_err + lam * predicted_err))
