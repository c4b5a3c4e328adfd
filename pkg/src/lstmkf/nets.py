"""LSTM stacks with forget gates, linear heads, presets, and serialization.

A network module is a stack of LSTM layers followed by fully connected
layers. The cell is the standard forget-gate LSTM:

    f_t = sigmoid(W_fh h_{t-1} + W_fx x_t + b_f)
    i_t = sigmoid(W_ih h_{t-1} + W_ix x_t + b_i)
    o_t = sigmoid(W_oh h_{t-1} + W_ox x_t + b_o)
    g_t = tanh   (W_ch h_{t-1} + W_cx x_t + b_c)
    c_t = f_t * c_{t-1} + i_t * g_t
    h_t = o_t * tanh(c_t)

Initialization: state-to-state matrices are random orthogonal, input
matrices uniform on [-0.01, 0.01], linear heads Xavier-uniform, biases zero
except the forget-gate bias which starts at 1.0. Dropout (inverted, applied
after each LSTM layer's output during training only, never to the recurrent
h/c carry) uses masks drawn from the caller's Philox stream.
"""

from __future__ import annotations

import json
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, orthogonal_matrix, xavier_bound
from .errors import ShapeMismatchError
from .rng import philox, uniform

__all__ = [
    "LstmLayerParams",
    "LinearLayer",
    "NetModule",
    "LstmState",
    "lstm_cell",
    "lstm_cell_detail",
    "CellDetail",
    "module_forward",
    "build_net_module",
    "build_zero_module",
    "preset_big_f",
    "preset_big_noise",
    "preset_small",
    "module_to_payload",
    "module_from_payload",
    "save_weights",
    "load_weights",
    "standalone_lstm_filter",
    "WEIGHTS_FORMAT",
    "WEIGHTS_VERSION",
]

_GATE_WEIGHT_NAMES = ("w_fh", "w_ih", "w_oh", "w_ch", "w_fx", "w_ix", "w_ox", "w_cx")
_GATE_BIAS_NAMES = ("b_f", "b_i", "b_o", "b_c")


@dataclass
class LstmLayerParams:
    """Eight weight matrices plus four biases for one LSTM layer."""

    w_fh: Tensor
    w_ih: Tensor
    w_oh: Tensor
    w_ch: Tensor
    w_fx: Tensor
    w_ix: Tensor
    w_ox: Tensor
    w_cx: Tensor
    b_f: Tensor
    b_i: Tensor
    b_o: Tensor
    b_c: Tensor

    def __post_init__(self):
        hidden = self.w_fh.shape[0]
        inp = self.w_fx.shape[1]
        for name in ("w_fh", "w_ih", "w_oh", "w_ch"):
            if getattr(self, name).shape != (hidden, hidden):
                raise ShapeMismatchError(f"{name} must be ({hidden}, {hidden})")
        for name in ("w_fx", "w_ix", "w_ox", "w_cx"):
            if getattr(self, name).shape != (hidden, inp):
                raise ShapeMismatchError(f"{name} must be ({hidden}, {inp})")
        for name in _GATE_BIAS_NAMES:
            if getattr(self, name).shape != (hidden, 1):
                raise ShapeMismatchError(f"{name} must be ({hidden}, 1)")

    @property
    def hidden_size(self) -> int:
        return self.w_fh.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_fx.shape[1]


@dataclass
class LinearLayer:
    weight: Tensor  # (out, in)
    bias: Tensor  # (out, 1)
    relu: bool = False

    def __post_init__(self):
        if self.bias.shape != (self.weight.shape[0], 1):
            raise ShapeMismatchError(
                f"linear bias {self.bias.shape} vs weight {self.weight.shape}"
            )


@dataclass
class NetModule:
    """LSTM stack plus linear head; `dropout_keep` is the keep probability."""

    lstm_layers: list[LstmLayerParams]
    linear_layers: list[LinearLayer]
    dropout_keep: float = 1.0

    def __post_init__(self):
        if not self.lstm_layers or not self.linear_layers:
            raise ShapeMismatchError("module needs at least one LSTM and one linear layer")
        if not 0.0 < self.dropout_keep <= 1.0:
            raise ValueError("dropout_keep must lie in (0, 1]")

    @property
    def input_size(self) -> int:
        return self.lstm_layers[0].input_size

    @property
    def output_size(self) -> int:
        return self.linear_layers[-1].weight.shape[0]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for li, layer in enumerate(self.lstm_layers):
            for name in _GATE_WEIGHT_NAMES + _GATE_BIAS_NAMES:
                out.append((f"lstm{li}.{name}", getattr(layer, name)))
        for li, layer in enumerate(self.linear_layers):
            out.append((f"fc{li}.weight", layer.weight))
            out.append((f"fc{li}.bias", layer.bias))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def describe(self) -> dict:
        return {
            "input_size": self.input_size,
            "lstm_hidden": [p.hidden_size for p in self.lstm_layers],
            "linear": [
                {"output_size": l.weight.shape[0], "relu": bool(l.relu)}
                for l in self.linear_layers
            ],
            "dropout_keep": self.dropout_keep,
        }


@dataclass
class LstmState:
    """Per-layer (h, c) runtime state of one module."""

    layers: list[tuple[Tensor, Tensor]]

    @classmethod
    def zeros(cls, module: NetModule) -> "LstmState":
        return cls(
            [
                (Tensor(np.zeros((p.hidden_size, 1))), Tensor(np.zeros((p.hidden_size, 1))))
                for p in module.lstm_layers
            ]
        )

    def detach(self) -> "LstmState":
        """Fresh leaves carrying the current values (cuts gradient flow)."""
        return LstmState([(h.detach(), c.detach()) for h, c in self.layers])

    def values(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(h.value.copy(), c.value.copy()) for h, c in self.layers]


CellDetail = namedtuple("CellDetail", "h c f i o g")


def _gate(tape: Tape, wh: Tensor, h: Tensor, wx: Tensor, x: Tensor, b: Tensor) -> Tensor:
    return tape.add(tape.add(tape.matmul(wh, h), tape.matmul(wx, x)), b)


def lstm_cell_detail(
    tape: Tape, x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmLayerParams
) -> CellDetail:
    """One cell step, also exposing the gate activations."""
    f = tape.sigmoid(_gate(tape, params.w_fh, h_prev, params.w_fx, x, params.b_f))
    i = tape.sigmoid(_gate(tape, params.w_ih, h_prev, params.w_ix, x, params.b_i))
    o = tape.sigmoid(_gate(tape, params.w_oh, h_prev, params.w_ox, x, params.b_o))
    g = tape.tanh(_gate(tape, params.w_ch, h_prev, params.w_cx, x, params.b_c))
    c = tape.add(tape.hadamard(f, c_prev), tape.hadamard(i, g))
    h = tape.hadamard(o, tape.tanh(c))
    return CellDetail(h, c, f, i, o, g)


def lstm_cell(
    tape: Tape, x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmLayerParams
) -> tuple[Tensor, Tensor]:
    detail = lstm_cell_detail(tape, x, h_prev, c_prev, params)
    return detail.h, detail.c


def module_forward(
    tape: Tape,
    module: NetModule,
    x: Tensor,
    state: LstmState,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, LstmState]:
    """One step through the stack and head.

    Returns (output, new state). With `training` set and dropout_keep < 1,
    each LSTM layer's output is masked (inverted dropout) on its way to the
    next layer / the head; the stored recurrent state is the pre-dropout h.
    In eval mode the pass is deterministic.
    """
    if x.shape != (module.input_size, 1):
        raise ShapeMismatchError(f"input {x.shape} vs module input ({module.input_size}, 1)")
    if len(state.layers) != len(module.lstm_layers):
        raise ShapeMismatchError("state has wrong number of layers")
    dropping = training and module.dropout_keep < 1.0
    if dropping and rng is None:
        raise ValueError("training-mode dropout needs an rng")
    signal = x
    new_layers: list[tuple[Tensor, Tensor]] = []
    for params, (h_prev, c_prev) in zip(module.lstm_layers, state.layers):
        h, c = lstm_cell(tape, signal, h_prev, c_prev, params)
        new_layers.append((h, c))
        signal = h
        if dropping:
            keep = module.dropout_keep
            mask = (rng.random(h.shape) < keep).astype(np.float64) / keep
            signal = tape.hadamard(signal, Tensor(mask))
    for layer in module.linear_layers:
        signal = tape.add(tape.matmul(layer.weight, signal), layer.bias)
        if layer.relu:
            signal = tape.relu(signal)
    return signal, LstmState(new_layers)


# ----------------------------------------------------------------------
# builders and presets
# ----------------------------------------------------------------------


def _lstm_layer(input_size: int, hidden_size: int, rng: np.random.Generator) -> LstmLayerParams:
    # Draw order (fixed, documented): four orthogonal state-to-state
    # matrices for gates f, i, o, c, then four uniform input matrices in the
    # same gate order. Biases are deterministic.
    state_w = [Tensor(orthogonal_matrix(hidden_size, hidden_size, rng)) for _ in range(4)]
    input_w = [Tensor(uniform(rng, (hidden_size, input_size), -0.01, 0.01)) for _ in range(4)]
    return LstmLayerParams(
        w_fh=state_w[0],
        w_ih=state_w[1],
        w_oh=state_w[2],
        w_ch=state_w[3],
        w_fx=input_w[0],
        w_ix=input_w[1],
        w_ox=input_w[2],
        w_cx=input_w[3],
        b_f=Tensor(np.ones((hidden_size, 1))),
        b_i=Tensor(np.zeros((hidden_size, 1))),
        b_o=Tensor(np.zeros((hidden_size, 1))),
        b_c=Tensor(np.zeros((hidden_size, 1))),
    )


def _linear_layer(input_size: int, output_size: int, relu: bool, rng: np.random.Generator) -> LinearLayer:
    bound = xavier_bound(output_size, input_size)
    return LinearLayer(
        weight=Tensor(uniform(rng, (output_size, input_size), -bound, bound)),
        bias=Tensor(np.zeros((output_size, 1))),
        relu=relu,
    )


def build_net_module(
    input_size: int,
    lstm_hidden: list[int],
    linear_sizes: list[int],
    relu_flags: list[bool] | None = None,
    dropout_keep: float = 1.0,
    seed: int = 0,
) -> NetModule:
    """Assemble a module from one Philox stream keyed by `seed`.

    `relu_flags` defaults to ReLU on every linear layer except the last.
    """
    if relu_flags is None:
        relu_flags = [True] * (len(linear_sizes) - 1) + [False]
    if len(relu_flags) != len(linear_sizes):
        raise ShapeMismatchError("relu_flags length must match linear_sizes")
    rng = philox(seed)
    lstm_layers = []
    feed = input_size
    for hidden in lstm_hidden:
        lstm_layers.append(_lstm_layer(feed, hidden, rng))
        feed = hidden
    linear_layers = []
    for size, relu in zip(linear_sizes, relu_flags):
        linear_layers.append(_linear_layer(feed, size, relu, rng))
        feed = size
    return NetModule(lstm_layers, linear_layers, dropout_keep)


def build_zero_module(
    input_size: int,
    lstm_hidden: list[int],
    linear_sizes: list[int],
    relu_flags: list[bool] | None = None,
    dropout_keep: float = 1.0,
) -> NetModule:
    """All-zero weights and biases (including forget bias); handy for
    freezing a module to the constant emitted by its final bias."""
    module = build_net_module(
        input_size, lstm_hidden, linear_sizes, relu_flags, dropout_keep, seed=0
    )
    for _, p in module.named_parameters():
        p.value[:] = 0.0
    return module


def preset_big_f(out_dim: int, seed: int = 0) -> NetModule:
    """Transition net at full scale: 3 LSTM layers of 1024 (dropout keep
    0.7), head 1024 -> 1024 -> out with ReLU on all but the last layer."""
    return build_net_module(
        out_dim, [1024, 1024, 1024], [1024, 1024, out_dim], dropout_keep=0.7, seed=seed
    )


def preset_big_noise(out_dim: int, seed: int = 0) -> NetModule:
    """Noise net at full scale: one LSTM layer of 256, linear head."""
    return build_net_module(out_dim, [256], [out_dim], seed=seed)


def preset_small(out_dim: int, seed: int = 0) -> NetModule:
    """Desk-scale net: one LSTM layer of 16, linear head, no dropout."""
    return build_net_module(out_dim, [16], [out_dim], seed=seed)


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

WEIGHTS_FORMAT = "net-weights"
WEIGHTS_VERSION = 1


def module_to_payload(module: NetModule) -> dict:
    """JSON-ready payload: architecture plus named, shaped arrays."""
    arrays = {}
    for name, tensor in module.named_parameters():
        arrays[name] = {
            "shape": list(tensor.value.shape),
            "data": tensor.value.ravel().tolist(),
        }
    return {"architecture": module.describe(), "arrays": arrays}


def module_from_payload(payload: dict) -> NetModule:
    """Rebuild a module; any shape/name mismatch is an error, never silent."""
    arch = payload["architecture"]
    module = build_zero_module(
        int(arch["input_size"]),
        [int(h) for h in arch["lstm_hidden"]],
        [int(l["output_size"]) for l in arch["linear"]],
        [bool(l["relu"]) for l in arch["linear"]],
        float(arch["dropout_keep"]),
    )
    arrays = dict(payload["arrays"])
    for name, tensor in module.named_parameters():
        if name not in arrays:
            raise ShapeMismatchError(f"weight container missing array {name!r}")
        entry = arrays.pop(name)
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if shape != tensor.value.shape:
            raise ShapeMismatchError(
                f"array {name!r} has shape {shape}, expected {tensor.value.shape}"
            )
        if data.size != shape[0] * shape[1]:
            raise ShapeMismatchError(f"array {name!r}: {data.size} values for shape {shape}")
        tensor.value[:] = data.reshape(shape)
    if arrays:
        raise ShapeMismatchError(f"weight container has unexpected arrays {sorted(arrays)}")
    return module


def save_weights(module: NetModule, path) -> None:
    """Write one module as a versioned JSON weight container.

    Values are decimal text (JSON shortest round-trip), so the container is
    byte-order independent and loads losslessly.
    """
    envelope = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        **module_to_payload(module),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_weights(path) -> NetModule:
    with open(path, "r", encoding="utf-8") as fh:
        envelope = json.load(fh)
    if envelope.get("format") != WEIGHTS_FORMAT:
        raise ShapeMismatchError(f"not a weight container: format {envelope.get('format')!r}")
    if envelope.get("version") != WEIGHTS_VERSION:
        raise ShapeMismatchError(f"unsupported weight container version {envelope.get('version')!r}")
    return module_from_payload(envelope)


# ----------------------------------------------------------------------
# standalone LSTM baseline
# ----------------------------------------------------------------------


def standalone_lstm_filter(measurements: np.ndarray, module: NetModule) -> np.ndarray:
    """Feed a (T, d) measurement sequence through the module recurrently.

    Eval mode (no dropout), fresh zero state; returns the (T, d) outputs.
    This is the sequence-to-sequence baseline that maps measurements
    directly to state estimates with no filtering structure.
    """
    z = np.asarray(measurements, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ShapeMismatchError(f"measurements must be (T, d), got {z.shape}")
    if module.input_size != z.shape[1] or module.output_size != z.shape[1]:
        raise ShapeMismatchError(
            f"module maps {module.input_size} -> {module.output_size}, data dim {z.shape[1]}"
        )
    tape = Tape()
    state = LstmState.zeros(module)
    outputs = np.empty_like(z)
    for t in range(z.shape[0]):
        y, state = module_forward(tape, module, Tensor(z[t].reshape(-1, 1)), state)
        outputs[t] = y.value[:, 0]
    return outputs
