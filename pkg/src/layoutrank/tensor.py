"""Dense f64 tensors with tape-based reverse-mode differentiation.

Just enough machinery for the graph models in this package: matmul,
elementwise ops, row gather/concat, per-edge segment softmax and
scatter-sum, dropout, and an Adam update. Everything is float64 and
deterministic given an explicit RNG.

Ops take the recording tape as their first argument; pass ``tape=None``
to run without recording (eval mode).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes do not satisfy the op's contract."""


class EmptySegment(ValueError):
    """A softmax/scatter segment has no incoming entries."""


class BadProbability(ValueError):
    """Dropout probability outside [0, 1)."""


class NonScalarLoss(ValueError):
    """backward() requires a single-element loss tensor."""


# When True, every op asserts its output is finite. Costs one pass over
# the data per op; tests flip it on.
DEBUG_CHECK_FINITE = False


class Tensor:
    """A dense float64 array plus an optional gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, delta: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += delta

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


@dataclass
class _Recorded:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered record of ops; backward replays it in reverse exactly once."""

    ops: list[_Recorded] = field(default_factory=list)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...],
               backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> None:
        self.ops.append(_Recorded(output, inputs, backward_fn))


def _finish(tape: Tape | None, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    if DEBUG_CHECK_FINITE and not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite value produced by tensor op")
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def matmul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _finish(tape, out, (a, b), backward)


def add(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data + b.data)
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} + {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish(tape, out, (a, b), backward)


def sub(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data - b.data)
    except ValueError as exc:
        raise ShapeMismatch(f"sub: {a.shape} - {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _finish(tape, out, (a, b), backward)


def mul(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data * b.data)
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.shape} * {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _finish(tape, out, (a, b), backward)


def scale(tape: Tape | None, a: Tensor, factor: float) -> Tensor:
    out = Tensor(a.data * factor)

    def backward(g):
        return (g * factor,)

    return _finish(tape, out, (a,), backward)


def transpose(tape: Tape | None, a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects a matrix, got {a.shape}")
    out = Tensor(a.data.T)

    def backward(g):
        return (g.T,)

    return _finish(tape, out, (a,), backward)


def reshape(tape: Tape | None, a: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(a.shape),)

    return _finish(tape, out, (a,), backward)


def concat_rows(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Stack b's rows below a's: [m1,d] + [m2,d] -> [m1+m2,d]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"concat_rows: {a.shape} | {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=0))
    split = a.shape[0]

    def backward(g):
        return g[:split], g[split:]

    return _finish(tape, out, (a, b), backward)


def concat_cols(tape: Tape | None, a: Tensor, b: Tensor) -> Tensor:
    """Row-wise concatenation [a_i || b_i]: [m,d1] + [m,d2] -> [m,d1+d2]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"concat_cols: {a.shape} || {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    split = a.shape[1]

    def backward(g):
        return g[:, :split], g[:, split:]

    return _finish(tape, out, (a, b), backward)


def gather_rows(tape: Tape | None, a: Tensor, indices) -> Tensor:
    """Select rows a[indices]; backward scatter-adds into the source rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"gather_rows expects a matrix, got {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {a.shape[0]} rows")
    out = Tensor(a.data[idx])

    def backward(g):
        acc = np.zeros_like(a.data)
        np.add.at(acc, idx, g)
        return (acc,)

    return _finish(tape, out, (a,), backward)


def leaky_relu(tape: Tape | None, a: Tensor, slope: float = 0.2) -> Tensor:
    out = Tensor(np.where(a.data > 0, a.data, slope * a.data))

    def backward(g):
        return (g * np.where(a.data > 0, 1.0, slope),)

    return _finish(tape, out, (a,), backward)


def elu(tape: Tape | None, a: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = Tensor(np.where(a.data > 0, a.data, neg))

    def backward(g):
        return (g * np.where(a.data > 0, 1.0, neg + alpha),)

    return _finish(tape, out, (a,), backward)


def sigmoid(tape: Tape | None, a: Tensor) -> Tensor:
    # Split by sign to avoid overflow in exp.
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)

    def backward(g):
        return (g * s * (1.0 - s),)

    return _finish(tape, out, (a,), backward)


def sum_all(tape: Tape | None, a: Tensor) -> Tensor:
    out = Tensor(np.array([a.data.sum()]))

    def backward(g):
        return (np.full_like(a.data, float(g.reshape(-1)[0])),)

    return _finish(tape, out, (a,), backward)


def mean_all(tape: Tape | None, a: Tensor) -> Tensor:
    n = a.size
    out = Tensor(np.array([a.data.mean()]))

    def backward(g):
        return (np.full_like(a.data, float(g.reshape(-1)[0]) / n),)

    return _finish(tape, out, (a,), backward)


def segment_softmax(tape: Tape | None, logits: Tensor, segment_of, num_segments: int) -> Tensor:
    """Softmax within groups of entries sharing a destination segment.

    `segment_of[e]` names the segment of entry e; every segment in
    [0, num_segments) must receive at least one entry. Max-subtraction per
    segment keeps exp() in range.
    """
    seg = np.asarray(segment_of, dtype=np.int64)
    if logits.data.ndim != 1 or seg.shape != logits.shape:
        raise ShapeMismatch(f"segment_softmax: logits {logits.shape} vs segments {seg.shape}")
    counts = np.bincount(seg, minlength=num_segments)
    if num_segments and counts.min() == 0:
        raise EmptySegment(f"segment {int(np.argmin(counts))} has no entries")

    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, logits.data)
    shifted = np.exp(logits.data - seg_max[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, shifted)
    probs = shifted / denom[seg]
    out = Tensor(probs)

    def backward(g):
        # d softmax: p * (g - sum_seg(g * p))
        weighted = np.zeros(num_segments)
        np.add.at(weighted, seg, g * probs)
        return (probs * (g - weighted[seg]),)

    return _finish(tape, out, (logits,), backward)


def segment_sum(tape: Tape | None, values: Tensor, segment_of, num_segments: int) -> Tensor:
    """Scatter-add rows of [num_entries,d] into [num_segments,d]; backward gathers."""
    seg = np.asarray(segment_of, dtype=np.int64)
    if values.data.ndim != 2 or seg.shape != (values.shape[0],):
        raise ShapeMismatch(f"segment_sum: values {values.shape} vs segments {seg.shape}")
    acc = np.zeros((num_segments, values.shape[1]))
    np.add.at(acc, seg, values.data)
    out = Tensor(acc)

    def backward(g):
        return (g[seg],)

    return _finish(tape, out, (values,), backward)


def scale_rows(tape: Tape | None, values: Tensor, weights: Tensor) -> Tensor:
    """Multiply row i of [m,d] by scalar weights[i]."""
    if values.data.ndim != 2 or weights.data.shape != (values.shape[0],):
        raise ShapeMismatch(f"scale_rows: {values.shape} by {weights.shape}")
    out = Tensor(values.data * weights.data[:, None])

    def backward(g):
        return g * weights.data[:, None], (g * values.data).sum(axis=1)

    return _finish(tape, out, (values, weights), backward)


def dropout(tape: Tape | None, x: Tensor, p: float, training: bool,
            rng: np.random.Generator) -> Tensor:
    """Inverted dropout: kept entries scaled by 1/(1-p); identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise BadProbability(f"dropout p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        out = Tensor(x.data.copy())

        def backward_id(g):
            return (g,)

        return _finish(tape, out, (x,), backward_id)

    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask)

    def backward(g):
        return (g * mask,)

    return _finish(tape, out, (x,), backward)


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate .grad of every requires_grad tensor reachable from loss."""
    if loss.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.ops):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        input_grads = rec.backward(g)
        for inp, ig in zip(rec.inputs, input_grads):
            if ig is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig.copy() if isinstance(ig, np.ndarray) else np.asarray(ig)
        # Leaves keep their accumulated gradient on the tensor itself.
    # Flush remaining gradients onto leaf tensors.
    for rec in tape.ops:
        for inp in rec.inputs:
            g = grads.get(id(inp))
            if g is not None and inp.requires_grad:
                inp._accumulate(g)
                grads.pop(id(inp), None)
    remaining = grads.get(id(loss))
    if remaining is not None and loss.requires_grad:
        loss._accumulate(remaining)


@dataclass
class AdamState:
    """First/second moment buffers plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("adam_step: params/grads/state length mismatch")
    state.t += 1
    t = state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} vs param {p.data.shape}")
        state.m[i] = beta1 * state.m[i] + (1 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1 - beta2) * g * g
        m_hat = state.m[i] / (1 - beta1 ** t)
        v_hat = state.v[i] / (1 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
