"""Reverse-mode automatic differentiation over dense float64 matrices.

Everything in this package that needs a derivative is composed from the
primitives on :class:`Tape`. Each primitive validates shapes, computes its
value eagerly with numpy, and records a backward closure; ``Tape.backward``
replays the records exactly once in reverse creation order, accumulating
vector-Jacobian products into a per-call gradient map keyed by node
identity. Gradients never live on tensors, so several tapes may run
forward/backward concurrently against shared read-only parameters and the
result is independent of interleaving.

Vectors are column matrices of shape (n, 1); scalars are (1, 1). There is
no broadcasting: elementwise primitives demand exact shape equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatchError, SingularMatrixError
from .rng import philox, standard_normals, uniform

__all__ = [
    "Tensor",
    "Tape",
    "spd_cholesky",
    "chol_solve",
    "spd_solve",
    "init_orthogonal",
    "orthogonal_matrix",
    "init_uniform",
    "init_xavier",
    "xavier_bound",
    "AdamState",
    "adam_step",
    "GradientCheckReport",
    "gradient_check",
]

_PIVOT_FLOOR = 1e-12


def _as_matrix(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64, order="C")
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeMismatchError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


class Tensor:
    """A dense float64 matrix node.

    Construction copies the input (1-d input becomes a column). Tensors are
    hashed by identity; the same object appearing twice in an expression
    accumulates both gradient contributions.
    """

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = _as_matrix(value)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.value = arr
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def detach(self) -> "Tensor":
        """Fresh leaf carrying a copy of the current value."""
        return Tensor(self.value)

    def __repr__(self) -> str:
        return f"Tensor({self.value.shape[0]}x{self.value.shape[1]})"


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.value.shape != b.value.shape:
        raise ShapeMismatchError(f"{op}: {a.value.shape} vs {b.value.shape}")


class Tape:
    """Ordered record of the primitive operations of one forward pass."""

    __slots__ = ("_ops",)

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self._ops)

    def _emit(self, value: np.ndarray, inputs: tuple, backward: Callable) -> Tensor:
        out = Tensor._wrap(value)
        self._ops.append((out, inputs, backward))
        return out

    # ------------------------------------------------------------------
    # primitives
    # ------------------------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        av, bv = a.value, b.value
        if av.shape[1] != bv.shape[0]:
            raise ShapeMismatchError(f"matmul: {av.shape} @ {bv.shape}")

        def backward(g):
            return g @ bv.T, av.T @ g

        return self._emit(av @ bv, (a, b), backward)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("add", a, b)

        def backward(g):
            return g, g

        return self._emit(a.value + b.value, (a, b), backward)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("sub", a, b)

        def backward(g):
            return g, -g

        return self._emit(a.value - b.value, (a, b), backward)

    def hadamard(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("hadamard", a, b)
        av, bv = a.value, b.value

        def backward(g):
            return g * bv, g * av

        return self._emit(av * bv, (a, b), backward)

    def scale(self, a: Tensor, factor: float) -> Tensor:
        c = float(factor)

        def backward(g):
            return (g * c,)

        return self._emit(a.value * c, (a,), backward)

    def sigmoid(self, a: Tensor) -> Tensor:
        out = 1.0 / (1.0 + np.exp(-a.value))

        def backward(g):
            return (g * out * (1.0 - out),)

        return self._emit(out, (a,), backward)

    def tanh(self, a: Tensor) -> Tensor:
        out = np.tanh(a.value)

        def backward(g):
            return (g * (1.0 - out * out),)

        return self._emit(out, (a,), backward)

    def exp(self, a: Tensor) -> Tensor:
        with np.errstate(over="ignore"):
            out = np.exp(a.value)
        if not np.isfinite(out).all():
            raise FloatingPointError("exp: overflow to non-finite value")

        def backward(g):
            return (g * out,)

        return self._emit(out, (a,), backward)

    def relu(self, a: Tensor) -> Tensor:
        av = a.value

        def backward(g):
            return (np.where(av > 0.0, g, 0.0),)

        return self._emit(np.maximum(av, 0.0), (a,), backward)

    def clip(self, a: Tensor, low: float, high: float) -> Tensor:
        # Subgradient convention: zero outside the open interval (low, high).
        av = a.value
        inside = (av > low) & (av < high)

        def backward(g):
            return (np.where(inside, g, 0.0),)

        return self._emit(np.clip(av, low, high), (a,), backward)

    def sum(self, a: Tensor) -> Tensor:
        """Sum of all entries, as a 1x1 matrix."""
        shape = a.value.shape

        def backward(g):
            return (np.full(shape, g[0, 0]),)

        return self._emit(np.array([[float(a.value.sum())]]), (a,), backward)

    def transpose(self, a: Tensor) -> Tensor:
        def backward(g):
            return (np.ascontiguousarray(g.T),)

        return self._emit(np.ascontiguousarray(a.value.T), (a,), backward)

    def diag(self, v: Tensor) -> Tensor:
        """Column vector (n, 1) -> diagonal matrix (n, n)."""
        if v.value.shape[1] != 1:
            raise ShapeMismatchError(f"diag expects a column vector, got {v.value.shape}")
        n = v.value.shape[0]

        def backward(g):
            return (np.diag(g).reshape(n, 1).copy(),)

        return self._emit(np.diag(v.value[:, 0]), (v,), backward)

    def solve_spd(self, m: Tensor, rhs: Tensor) -> Tensor:
        """x with m @ x = rhs for symmetric positive-definite m.

        Factorizes once (Cholesky, hand-rolled so pivot failures carry the
        pivot index) and never materializes an inverse; the backward pass
        reuses the factor.
        """
        mv, rv = m.value, rhs.value
        if mv.shape[0] != mv.shape[1]:
            raise ShapeMismatchError(f"solve_spd: matrix must be square, got {mv.shape}")
        if rv.shape[0] != mv.shape[0]:
            raise ShapeMismatchError(f"solve_spd: {mv.shape} vs rhs {rv.shape}")
        lower = spd_cholesky(mv)
        x = chol_solve(lower, rv)

        def backward(g):
            grad_rhs = chol_solve(lower, g)
            return -grad_rhs @ x.T, grad_rhs

        return self._emit(x, (m, rhs), backward)

    # ------------------------------------------------------------------
    # reverse pass
    # ------------------------------------------------------------------

    def backward(self, output: Tensor, seed=None) -> dict[Tensor, np.ndarray]:
        """Vector-Jacobian products of `output` w.r.t. every recorded node.

        `seed` defaults to all-ones (the gradient of sum(output)); pass a
        basis vector to extract one Jacobian row. Each recorded operation is
        visited exactly once, in reverse creation order; nodes that do not
        reach `output` are skipped. Returns a dict mapping tensor -> gradient
        array; query leaves (parameters, inputs) by object identity.
        """
        if seed is None:
            g0 = np.ones_like(output.value)
        else:
            g0 = np.asarray(seed, dtype=np.float64).reshape(output.value.shape).copy()
        grads: dict[Tensor, np.ndarray] = {output: g0}
        for out, inputs, backward in reversed(self._ops):
            g = grads.get(out)
            if g is None:
                continue
            for node, piece in zip(inputs, backward(g)):
                acc = grads.get(node)
                grads[node] = piece if acc is None else acc + piece
        return grads


# ----------------------------------------------------------------------
# dense SPD kernels (shared by the tape op and the classic filters)
# ----------------------------------------------------------------------


def spd_cholesky(m: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L @ L.T = m.

    Raises SingularMatrixError carrying the pivot index as soon as a pivot
    falls to 1e-12 or below (also catches NaN pivots).
    """
    m = np.asarray(m, dtype=np.float64)
    n = m.shape[0]
    lower = np.zeros((n, n))
    for j in range(n):
        pivot = m[j, j] - lower[j, :j] @ lower[j, :j]
        if not pivot > _PIVOT_FLOOR:
            raise SingularMatrixError(j, float(pivot))
        lower[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            lower[j + 1 :, j] = (m[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return lower


def _forward_substitute(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.array(b, dtype=np.float64, copy=True)
    for i in range(x.shape[0]):
        if i:
            x[i] -= lower[i, :i] @ x[:i]
        x[i] /= lower[i, i]
    return x


def _back_substitute(upper: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.array(b, dtype=np.float64, copy=True)
    n = x.shape[0]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= upper[i, i + 1 :] @ x[i + 1 :]
        x[i] /= upper[i, i]
    return x


def chol_solve(lower: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return _back_substitute(lower.T, _forward_substitute(lower, rhs))


def spd_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve m @ x = rhs for SPD m; rhs may be a vector or a matrix."""
    m = np.asarray(m, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatchError(f"spd_solve: matrix must be square, got {m.shape}")
    if rhs.shape[0] != m.shape[0]:
        raise ShapeMismatchError(f"spd_solve: {m.shape} vs rhs {rhs.shape}")
    return chol_solve(spd_cholesky(m), rhs)


# ----------------------------------------------------------------------
# initializers
# ----------------------------------------------------------------------


def orthogonal_matrix(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal (rows, cols) matrix via QR of a Gaussian draw.

    The QR sign ambiguity is fixed by forcing the R diagonal positive, so
    the result is a deterministic function of the stream. For rectangular
    shapes the Gram matrix over the smaller dimension is the identity.
    """
    if rows < 1 or cols < 1:
        raise ShapeMismatchError(f"orthogonal_matrix: bad shape ({rows}, {cols})")
    tall = standard_normals(rng, (max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(tall)
    q = q * np.where(np.diag(r) >= 0.0, 1.0, -1.0)
    return np.ascontiguousarray(q if rows >= cols else q.T)


def init_orthogonal(rows: int, cols: int, seed: int) -> np.ndarray:
    return orthogonal_matrix(rows, cols, philox(seed))


def init_uniform(rows: int, cols: int, bound: float, seed: int) -> np.ndarray:
    if bound < 0:
        raise ValueError("init_uniform: bound must be non-negative")
    return uniform(philox(seed), (rows, cols), -bound, bound)


def xavier_bound(rows: int, cols: int) -> float:
    return math.sqrt(6.0 / (rows + cols))


def init_xavier(rows: int, cols: int, seed: int) -> np.ndarray:
    return init_uniform(rows, cols, xavier_bound(rows, cols), seed)


# ----------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter.

    The counter increases by exactly one per `adam_step` call (one update
    over the whole parameter set), and the bias corrections use it.
    """

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moments: list[np.ndarray] | None = None
    second_moments: list[np.ndarray] | None = None

    @classmethod
    def for_parameters(
        cls,
        params: Sequence[Tensor],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            first_moments=[np.zeros_like(p.value) for p in params],
            second_moments=[np.zeros_like(p.value) for p in params],
        )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One Adam update over the whole parameter set, in place."""
    if state.first_moments is None or state.second_moments is None:
        raise ValueError("AdamState not initialized; use AdamState.for_parameters")
    if not (len(params) == len(grads) == len(state.first_moments)):
        raise ShapeMismatchError("adam_step: params/grads/state length mismatch")
    state.step_count += 1
    t = state.step_count
    correct1 = 1.0 - state.beta1**t
    correct2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.value.shape:
            raise ShapeMismatchError(f"adam_step: grad {g.shape} vs param {p.value.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= state.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + state.epsilon)


# ----------------------------------------------------------------------
# finite-difference harness
# ----------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    max_relative_error: float
    tolerance: float
    passed: bool
    worst_parameter: int
    worst_entry: int

    def __str__(self) -> str:
        status = "OK" if self.passed else "MISMATCH"
        return (
            f"gradient check {status}: max rel err {self.max_relative_error:.3e} "
            f"(tol {self.tolerance:.1e}) at param {self.worst_parameter} "
            f"entry {self.worst_entry}"
        )


def gradient_check(
    build_loss: Callable[[], tuple[Tape, Tensor]],
    params: Sequence[Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradientCheckReport:
    """Compare reverse-mode gradients against central finite differences.

    `build_loss` must rebuild the forward pass from scratch (fresh tape) and
    return (tape, loss) with a 1x1 loss; it has to be deterministic, reading
    the current values of `params` each call. Every entry of every parameter
    is perturbed by +-step. The error metric is
    |analytic - numeric| / max(1, |analytic|, |numeric|); non-finite losses
    raise immediately.
    """
    tape, loss_node = build_loss()
    if loss_node.value.shape != (1, 1):
        raise ShapeMismatchError(f"loss must be 1x1, got {loss_node.value.shape}")
    if not math.isfinite(float(loss_node.value[0, 0])):
        raise FloatingPointError("gradient_check: non-finite loss at base point")
    grad_map = tape.backward(loss_node)

    worst = 0.0
    worst_param = -1
    worst_entry = -1
    for pi, p in enumerate(params):
        analytic = grad_map.get(p)
        if analytic is None:
            analytic = np.zeros_like(p.value)
        flat = p.value.ravel()
        aflat = analytic.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            f_plus = float(build_loss()[1].value[0, 0])
            flat[k] = orig - step
            f_minus = float(build_loss()[1].value[0, 0])
            flat[k] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise FloatingPointError("gradient_check: non-finite perturbed loss")
            numeric = (f_plus - f_minus) / (2.0 * step)
            rel = abs(aflat[k] - numeric) / max(1.0, abs(aflat[k]), abs(numeric))
            if rel > worst:
                worst, worst_param, worst_entry = rel, pi, k
    return GradientCheckReport(
        max_relative_error=worst,
        tolerance=tolerance,
        passed=worst <= tolerance,
        worst_parameter=worst_param,
        worst_entry=worst_entry,
    )
