"""Minimal dense-tensor reverse-mode automatic differentiation.

Eager tape design: every differentiable op appends one record to the
thread-active :class:`Tape`; :func:`backward` replays the records in reverse,
accumulating exact analytic adjoints. Ops run in float64 (tests, gradient
checks) or float32 (training); forward values are checked finite after every
op so numerical blowups fail loudly at their source.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

BCE_EPS = 1e-7


class NonFiniteError(ArithmeticError):
    """A forward value came out NaN or infinite."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_produced")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._produced = False  # set when an op under a tape created this tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


class TapeRecord:
    __slots__ = ("op", "inputs", "output", "backward_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor, backward_fn):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_tls = threading.local()


class Tape:
    """Ordered op records for one forward pass; single-threaded by contract."""

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_tls, "stack", None)
        if stack is None:
            stack = _tls.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tls.stack.pop()

    @staticmethod
    def current() -> "Tape | None":
        stack = getattr(_tls, "stack", None)
        return stack[-1] if stack else None


def _check_finite(arr: np.ndarray, op: str) -> None:
    # cheap single-pass probe; a non-finite sum is confirmed element-wise
    if not np.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite value produced by {op}")


def _emit(
    op: str,
    inputs: tuple[Tensor, ...],
    out_data: np.ndarray,
    backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]],
) -> Tensor:
    _check_finite(out_data, op)
    out = Tensor(out_data, requires_grad=any(t.requires_grad or t._produced for t in inputs))
    tape = Tape.current()
    if tape is not None and out.requires_grad:
        out._produced = True
        tape.records.append(TapeRecord(op, inputs, out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _emit("add", (a, b), out, back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _emit("mul", (a, b), out, back)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * c

    def back(g):
        return (g * c,)

    return _emit("scale", (a,), out, back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return _emit("matmul", (a, b), out, back)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")
    out = a.data.T.copy()

    def back(g):
        return (g.T,)

    return _emit("transpose", (a,), out, back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("concat of nothing")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _emit("concat", tuple(tensors), out, back)


def row_softmax(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("row_softmax expects a 2-D tensor")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _emit("row_softmax", (a,), y, back)


def masked_row_softmax(a: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax over the True entries of each row; False entries get weight 0."""
    if a.data.shape != mask.shape:
        raise ValueError(f"mask shape {mask.shape} != tensor shape {a.shape}")
    if not mask.any(axis=1).all():
        raise ValueError("every row needs at least one unmasked entry")
    neg = np.where(mask, a.data, -np.inf)
    shifted = a.data - neg.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(np.where(mask, shifted, 0.0)), 0.0)
    y = e / e.sum(axis=1, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _emit("masked_row_softmax", (a,), y, back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def back(g):
        return (g * y * (1.0 - y),)

    return _emit("sigmoid", (a,), y, back)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.data
    out = np.where(x > 0, x, slope * x)

    def back(g):
        return (g * np.where(x > 0, 1.0, slope),)

    return _emit("leaky_relu", (a,), out, back)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    out = np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))

    def back(g):
        return (g * np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0))),)

    return _emit("elu", (a,), out, back)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("slice_cols expects a 2-D tensor")
    if not 0 <= lo < hi <= a.data.shape[1]:
        raise ValueError(f"column range [{lo}, {hi}) outside width {a.data.shape[1]}")
    out = a.data[:, lo:hi]
    shape = a.data.shape

    def back(g):
        z = np.zeros(shape, dtype=g.dtype)
        z[:, lo:hi] = g
        return (z,)

    return _emit("slice_cols", (a,), out, back)


def row_sum(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("row_sum expects a 2-D tensor")
    out = a.data.sum(axis=1, keepdims=True)
    width = a.data.shape[1]

    def back(g):
        return (np.repeat(g, width, axis=1),)

    return _emit("row_sum", (a,), out, back)


def gather_rows(a: Tensor, indices: np.ndarray) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)
    out = a.data[idx]
    shape = a.data.shape

    def back(g):
        z = np.zeros(shape, dtype=g.dtype)
        np.add.at(z, idx, g)
        return (z,)

    return _emit("gather_rows", (a,), out, back)


def segment_sum(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("segment_sum expects a 2-D tensor")
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != a.data.shape[0]:
        raise ValueError("one segment id per row required")
    out = np.zeros((num_segments, a.data.shape[1]), dtype=a.data.dtype)
    np.add.at(out, seg, a.data)

    def back(g):
        return (g[seg],)

    return _emit("segment_sum", (a,), out, back)


def mean_rows(a: Tensor, segment_ids: np.ndarray, num_segments: int | None = None) -> Tensor:
    """Per-segment mean of rows. Every segment in range must be populated."""
    if a.data.ndim != 2:
        raise ValueError("mean_rows expects a 2-D tensor")
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != a.data.shape[0]:
        raise ValueError("one segment id per row required")
    s = int(seg.max()) + 1 if num_segments is None else num_segments
    counts = np.bincount(seg, minlength=s).astype(a.data.dtype)
    if (counts == 0).any():
        raise ValueError("mean_rows over an empty segment")
    out = np.zeros((s, a.data.shape[1]), dtype=a.data.dtype)
    np.add.at(out, seg, a.data)
    out /= counts[:, None]

    def back(g):
        return (g[seg] / counts[seg, None],)

    return _emit("mean_rows", (a,), out, back)


def segment_softmax(a: Tensor, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Softmax within each segment of rows; ``a`` is (n, 1) or (n,)."""
    x = a.data
    flat = x.reshape(-1)
    seg = np.asarray(segment_ids, dtype=np.int64)
    if seg.shape[0] != flat.shape[0]:
        raise ValueError("one segment id per entry required")
    seg_max = np.full(num_segments, -np.inf, dtype=flat.dtype)
    np.maximum.at(seg_max, seg, flat)
    if not np.all(np.isfinite(seg_max[np.bincount(seg, minlength=num_segments) > 0])):
        raise NonFiniteError("non-finite value in segment_softmax input")
    e = np.exp(flat - seg_max[seg])
    denom = np.zeros(num_segments, dtype=flat.dtype)
    np.add.at(denom, seg, e)
    y = (e / denom[seg]).reshape(x.shape)

    def back(g):
        gf = g.reshape(-1)
        yf = y.reshape(-1)
        dots = np.zeros(num_segments, dtype=gf.dtype)
        np.add.at(dots, seg, gf * yf)
        return ((yf * (gf - dots[seg])).reshape(x.shape),)

    return _emit("segment_softmax", (a,), y, back)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)
    shape = a.data.shape

    def back(g):
        return (np.broadcast_to(g, shape).astype(g.dtype),)

    return _emit("sum_all", (a,), out, back)


def bce_loss(pred: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy; predictions clamped into [eps, 1-eps]."""
    y = np.asarray(labels, dtype=pred.data.dtype).reshape(-1)
    p_raw = pred.data.reshape(-1)
    if y.shape != p_raw.shape:
        raise ValueError(f"{p_raw.shape[0]} predictions vs {y.shape[0]} labels")
    p = np.clip(p_raw, BCE_EPS, 1.0 - BCE_EPS)
    n = p.shape[0]
    out = np.asarray(-(y * np.log(p) + (1.0 - y) * np.log1p(-p)).mean(), dtype=pred.data.dtype)
    active = (p_raw > BCE_EPS) & (p_raw < 1.0 - BCE_EPS)
    shape = pred.data.shape

    def back(g):
        gp = np.where(active, (p - y) / (p * (1.0 - p)), 0.0) * (float(g) / n)
        return (gp.reshape(shape),)

    return _emit("bce_loss", (pred,), out, back)


# ---------------------------------------------------------------------------
# Reverse pass and gradient checking
# ---------------------------------------------------------------------------


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every requires_grad tensor.

    Repeated calls on the same tape add up (callers reset grads between
    optimizer steps). Tensors created under one tape are not valid inputs to
    ops recorded on another: their producing records live on the first tape,
    so the second would silently drop their adjoints.
    """
    t = tape or Tape.current()
    if t is None:
        raise RuntimeError("backward needs an active or explicit Tape")
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    if loss.requires_grad and not loss._produced:
        loss.accumulate_grad(adjoint[id(loss)])
    for rec in reversed(t.records):
        g = adjoint.pop(id(rec.output), None)
        if g is None:
            continue
        if rec.output.requires_grad:
            rec.output.accumulate_grad(g)
        grads = rec.backward_fn(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None:
                continue
            if inp._produced:
                key = id(inp)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + gi
                else:
                    adjoint[key] = gi
            elif inp.requires_grad:
                inp.accumulate_grad(gi)


def grad_check(
    f: Callable[[Sequence[Tensor]], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    max_coords: int = 2000,
    seed: int = 0,
    probe_eval: Callable[[int], float] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(params)`` must be a deterministic scalar in float64. When the total
    coordinate count exceeds ``max_coords``, a fixed-seed sample of that many
    coordinates (across all parameters) is checked instead of every one.

    ``probe_eval``, when given, replaces ``f`` for the finite-difference
    probes: it is called as ``probe_eval(i)`` with the index of the perturbed
    parameter and must return the same scalar ``f`` would. Callers use it to
    skip recomputing work upstream of the perturbed tensor.
    """
    params = list(params)
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 parameters")
        if not p.data.flags.c_contiguous:
            raise ValueError("grad_check requires contiguous parameter storage")
        p.zero_grad()
    with Tape() as tape:
        loss = f(params)
        backward(loss, tape)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    sizes = [p.data.size for p in params]
    total = int(sum(sizes))
    if total == 0:
        return 0.0
    if total > max_coords:
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(total, size=max_coords, replace=False))
    else:
        chosen = np.arange(total)
    bounds = np.cumsum([0] + sizes)

    def eval_scalar(pi: int) -> float:
        if probe_eval is not None:
            return float(probe_eval(pi))
        return float(f(params).data.reshape(-1)[0])

    worst = 0.0
    for flat in chosen:
        pi = int(np.searchsorted(bounds, flat, side="right") - 1)
        local = int(flat - bounds[pi])
        view = params[pi].data.reshape(-1)
        orig = float(view[local])
        view[local] = orig + h
        f_plus = eval_scalar(pi)
        view[local] = orig - h
        f_minus = eval_scalar(pi)
        view[local] = orig
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NonFiniteError("non-finite value while probing finite differences")
        numeric = (f_plus - f_minus) / (2.0 * h)
        an = float(analytic[pi].reshape(-1)[local])
        err = abs(an - numeric) / max(1e-8, abs(an) + abs(numeric))
        worst = max(worst, err)
    return worst
