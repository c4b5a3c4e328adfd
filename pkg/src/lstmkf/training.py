"""End-to-end training with truncated backpropagation through time.

Sequences are shuffled each epoch (Philox stream derived from the config
seed), grouped into batches, and each batch is processed segment by
segment: forward over `truncation` steps on a fresh tape, one backward
pass, optional global-norm gradient clipping, one Adam update, then the
runtime state carries its values across the boundary with gradients cut.
The per-segment objective averages over batch members and steps.

The learning rate follows lr_epoch = lr0 * decay^max(0, epoch - (start-1))
with 1-indexed epochs, i.e. decay kicks in at `decay_start_epoch`.

Both the full filter (composite loss, gain logging) and the standalone
LSTM baseline (plain MSE) train through the same loop.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Tape, Tensor, adam_step
from .errors import ShapeMismatchError, TrainingDivergedError
from .filtering import LstmKfParams, initial_state, rollout
from .nets import LstmState, NetModule, module_forward, module_from_payload, module_to_payload
from .rng import philox
from .synth import TrajectoryDataset

__all__ = [
    "TrainConfig",
    "EpochStats",
    "TrainResult",
    "scheduled_learning_rate",
    "train_lstm_kf",
    "train_standalone_lstm",
    "save_checkpoint",
    "load_checkpoint",
    "Checkpoint",
    "write_train_log",
    "read_train_log",
    "CHECKPOINT_FORMAT",
    "CHECKPOINT_VERSION",
]


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    `clip_norm` is a global gradient-norm ceiling (None disables). `lam`
    weights the prediction term of the composite loss and is ignored by
    the standalone baseline.
    """

    learning_rate: float
    epochs: int
    batch_size: int = 2
    truncation: int = 10
    lam: float = 0.8
    decay: float = 1.0
    decay_start_epoch: int = 2
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1 or self.truncation < 1:
            raise ValueError("epochs, batch_size, truncation must be >= 1")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must lie in (0, 1]")
        if self.decay_start_epoch < 1:
            raise ValueError("decay_start_epoch must be >= 1")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive (or None)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "truncation": self.truncation,
            "lam": self.lam,
            "decay": self.decay,
            "decay_start_epoch": self.decay_start_epoch,
            "clip_norm": self.clip_norm,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    mean_gain: float  # NaN for models without a Kalman gain
    learning_rate: float


@dataclass
class TrainResult:
    log: list[EpochStats] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.log[-1].loss if self.log else math.nan


def scheduled_learning_rate(config: TrainConfig, epoch: int) -> float:
    """1-indexed epochs; decay starts multiplying at decay_start_epoch."""
    exponent = max(0, epoch - (config.decay_start_epoch - 1))
    return config.learning_rate * config.decay**exponent


def _segments(length: int, truncation: int) -> list[tuple[int, int]]:
    return [(s, min(s + truncation, length)) for s in range(0, length, truncation)]


def _batches(order: np.ndarray, batch_size: int) -> list[list[int]]:
    order = [int(i) for i in order]
    return [order[i : i + batch_size] for i in range(0, len(order), batch_size)]


def _clip_gradients(grads: list[np.ndarray], clip_norm: float | None) -> None:
    if clip_norm is None:
        return
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > clip_norm:
        factor = clip_norm / total
        for g in grads:
            g *= factor


def _reduce_sum(tape: Tape, terms: list[Tensor]) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = tape.add(acc, t)
    return acc


def _squared_norm(tape: Tape, v: Tensor) -> Tensor:
    return tape.sum(tape.hadamard(v, v))


def _gather_grads(tensors: list[Tensor], grad_map: dict) -> list[np.ndarray]:
    # Parameters never touched in a segment get an explicit zero gradient
    # so Adam still advances their moment estimates uniformly.
    out = []
    for t in tensors:
        g = grad_map.get(t)
        out.append(g if g is not None else np.zeros_like(t.value))
    return out


def train_lstm_kf(
    dataset: TrajectoryDataset, params: LstmKfParams, config: TrainConfig
) -> TrainResult:
    """Train the three filter modules in place; returns the epoch log.

    The logged loss is the composite objective averaged over every step
    seen in the epoch; the logged gain is the mean diagonal entry of K_t
    over the same steps (parameters move within the epoch, so this traces
    the optimizer's trajectory, which is what the gain-curve diagnostic is
    for). A non-finite segment loss aborts with the epoch and batch index.
    """
    if dataset.dim != params.dim:
        raise ShapeMismatchError(f"dataset dim {dataset.dim} vs filter dim {params.dim}")
    tensors = params.parameters()
    adam = AdamState.for_parameters(tensors, config.learning_rate)
    shuffle_rng = philox(config.seed, 1)
    dropout_rng = philox(config.seed, 2)
    result = TrainResult()
    for epoch in range(1, config.epochs + 1):
        adam.learning_rate = scheduled_learning_rate(config, epoch)
        order = shuffle_rng.permutation(dataset.n_sequences)
        loss_total = 0.0
        gain_total = 0.0
        steps_total = 0
        for batch_index, batch in enumerate(_batches(order, config.batch_size)):
            states = {
                si: initial_state(dataset.sequences[si].measurements[0], params)
                for si in batch
            }
            for lo, hi in _segments(dataset.length, config.truncation):
                tape = Tape()
                terms: list[Tensor] = []
                for si in batch:
                    seq = dataset.sequences[si]
                    state = states[si].detach()
                    state, records = rollout(
                        tape,
                        state,
                        seq.measurements[lo:hi],
                        params,
                        training=True,
                        rng=dropout_rng,
                    )
                    states[si] = state
                    for k, record in enumerate(records):
                        target = Tensor(seq.truth[lo + k].reshape(-1, 1))
                        err_f = _squared_norm(tape, tape.sub(target, record.filtered))
                        err_p = _squared_norm(tape, tape.sub(target, record.predicted))
                        terms.append(tape.add(err_f, tape.scale(err_p, config.lam)))
                        gain_total += float(np.diag(record.gain).mean())
                seg_steps = (hi - lo) * len(batch)
                seg_loss = tape.scale(_reduce_sum(tape, terms), 1.0 / seg_steps)
                value = float(seg_loss.value[0, 0])
                if not math.isfinite(value):
                    raise TrainingDivergedError(epoch, batch_index)
                grad_map = tape.backward(seg_loss)
                grads = _gather_grads(tensors, grad_map)
                _clip_gradients(grads, config.clip_norm)
                adam_step(tensors, grads, adam)
                loss_total += value * seg_steps
                steps_total += seg_steps
        result.log.append(
            EpochStats(
                epoch=epoch,
                loss=loss_total / steps_total,
                mean_gain=gain_total / steps_total,
                learning_rate=adam.learning_rate,
            )
        )
    return result


def train_standalone_lstm(
    dataset: TrajectoryDataset, module: NetModule, config: TrainConfig
) -> TrainResult:
    """Train the sequence-to-sequence baseline (plain MSE) in place."""
    if dataset.dim != module.input_size or dataset.dim != module.output_size:
        raise ShapeMismatchError(
            f"dataset dim {dataset.dim} vs module {module.input_size}->{module.output_size}"
        )
    tensors = module.parameters()
    adam = AdamState.for_parameters(tensors, config.learning_rate)
    shuffle_rng = philox(config.seed, 1)
    dropout_rng = philox(config.seed, 2)
    result = TrainResult()
    for epoch in range(1, config.epochs + 1):
        adam.learning_rate = scheduled_learning_rate(config, epoch)
        order = shuffle_rng.permutation(dataset.n_sequences)
        loss_total = 0.0
        steps_total = 0
        for batch_index, batch in enumerate(_batches(order, config.batch_size)):
            states = {si: LstmState.zeros(module) for si in batch}
            for lo, hi in _segments(dataset.length, config.truncation):
                tape = Tape()
                terms: list[Tensor] = []
                for si in batch:
                    seq = dataset.sequences[si]
                    state = states[si].detach()
                    for t in range(lo, hi):
                        x = Tensor(seq.measurements[t].reshape(-1, 1))
                        y, state = module_forward(
                            tape, module, x, state, training=True, rng=dropout_rng
                        )
                        target = Tensor(seq.truth[t].reshape(-1, 1))
                        terms.append(_squared_norm(tape, tape.sub(target, y)))
                    states[si] = state
                seg_steps = (hi - lo) * len(batch)
                seg_loss = tape.scale(_reduce_sum(tape, terms), 1.0 / seg_steps)
                value = float(seg_loss.value[0, 0])
                if not math.isfinite(value):
                    raise TrainingDivergedError(epoch, batch_index)
                grad_map = tape.backward(seg_loss)
                grads = _gather_grads(tensors, grad_map)
                _clip_gradients(grads, config.clip_norm)
                adam_step(tensors, grads, adam)
                loss_total += value * seg_steps
                steps_total += seg_steps
        result.log.append(
            EpochStats(
                epoch=epoch,
                loss=loss_total / steps_total,
                mean_gain=math.nan,
                learning_rate=adam.learning_rate,
            )
        )
    return result


# ----------------------------------------------------------------------
# checkpoints and logs
# ----------------------------------------------------------------------

CHECKPOINT_FORMAT = "lstm-kf-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str  # "lstm_kf" | "std_lstm"
    config: TrainConfig
    params: LstmKfParams | None = None
    module: NetModule | None = None


def save_checkpoint(
    path,
    config: TrainConfig,
    params: LstmKfParams | None = None,
    module: NetModule | None = None,
) -> None:
    """Versioned JSON container: weights of every module plus the exact
    TrainConfig (seed included)."""
    if (params is None) == (module is None):
        raise ValueError("pass exactly one of params (full filter) or module (baseline)")
    envelope: dict = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "train_config": config.to_dict(),
        "seed": config.seed,
    }
    if params is not None:
        envelope["kind"] = "lstm_kf"
        envelope["modules"] = {
            "f": module_to_payload(params.f_module),
            "q": module_to_payload(params.q_module),
            "r": module_to_payload(params.r_module),
        }
    else:
        envelope["kind"] = "std_lstm"
        envelope["module"] = module_to_payload(module)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        envelope = json.load(fh)
    if envelope.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a checkpoint: format {envelope.get('format')!r}")
    if envelope.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {envelope.get('version')!r}")
    config = TrainConfig.from_dict(envelope["train_config"])
    kind = envelope.get("kind")
    if kind == "lstm_kf":
        mods = envelope["modules"]
        params = LstmKfParams(
            f_module=module_from_payload(mods["f"]),
            q_module=module_from_payload(mods["q"]),
            r_module=module_from_payload(mods["r"]),
        )
        return Checkpoint(kind=kind, config=config, params=params)
    if kind == "std_lstm":
        return Checkpoint(kind=kind, config=config, module=module_from_payload(envelope["module"]))
    raise ValueError(f"unknown checkpoint kind {kind!r}")


def write_train_log(path, log: list[EpochStats]) -> None:
    lines = ["epoch,loss,mean_gain,learning_rate"]
    for row in log:
        lines.append(
            f"{row.epoch},{row.loss!r},{row.mean_gain!r},{row.learning_rate!r}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_train_log(path) -> list[EpochStats]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "epoch,loss,mean_gain,learning_rate":
        raise ValueError("not a training log: bad header")
    out = []
    for idx, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"training log line {idx}: expected 4 columns")
        out.append(
            EpochStats(
                epoch=int(parts[0]),
                loss=float(parts[1]),
                mean_gain=float(parts[2]),
                learning_rate=float(parts[3]),
            )
        )
    return out
