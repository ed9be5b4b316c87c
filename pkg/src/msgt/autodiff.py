"""Minimal dense-tensor engine with reverse-mode gradients.

Tensors wrap float64 numpy arrays and are immutable after construction
(only ``grad`` buffers mutate). Ops record onto the innermost active
``Tape``; with no tape open they are plain numpy forwards, which is the
inference path. ``backward(tape, loss)`` walks the records once, in
reverse, and accumulates into the ``grad`` buffer of every
``requires_grad`` tensor reached — repeated calls accumulate, reset with
``zero_grad``.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

from . import kernels

_ids = itertools.count()
_TAPE_STACK: list["Tape"] = []

_LOGIT_EPS = 1e-12


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_id", "_track")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._id = next(_ids)
        self._track = self.requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() on non-scalar tensor")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience arithmetic; constants are wrapped on the spot
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class OpRecord:
    """One tape entry: op id, input/output tensor ids, and the cached
    backward closure (gout -> per-input gradients, None for skips)."""

    __slots__ = ("op", "inputs", "input_ids", "output_id", "backward_fn")

    def __init__(self, op: str, inputs: tuple[Tensor, ...], output: Tensor,
                 backward_fn: Callable[[np.ndarray], tuple]):
        self.op = op
        self.inputs = inputs
        self.input_ids = tuple(t._id for t in inputs)
        self.output_id = output._id
        self.backward_fn = backward_fn


class Tape:
    """Ordered computation record; every input id precedes its consumer."""

    def __init__(self):
        self.records: list[OpRecord] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


def _emit(op: str, inputs: tuple[Tensor, ...], out_data: np.ndarray,
          backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_data)
    if _TAPE_STACK and any(t._track for t in inputs):
        out._track = True
        _TAPE_STACK[-1].records.append(OpRecord(op, inputs, out, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse pass over the tape from a scalar loss.

    Visits each record exactly once in reverse order; grads accumulate
    into .grad of requires_grad tensors (call zero_grad between passes
    unless accumulation is wanted).
    """
    if loss.data.size != 1:
        raise ValueError("backward: loss must be a scalar tensor")
    adjoints: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    if loss.requires_grad:
        leaves[loss._id] = loss
    for rec in reversed(tape.records):
        gout = adjoints.get(rec.output_id)
        if gout is None:
            continue
        grads = rec.backward_fn(gout)
        for t, g in zip(rec.inputs, grads):
            if g is None or not t._track:
                continue
            prev = adjoints.get(t._id)
            adjoints[t._id] = g if prev is None else prev + g
            if t.requires_grad:
                leaves[t._id] = t
    for tid, t in leaves.items():
        t._accumulate(adjoints[tid])


def zero_grads(params: Sequence[Tensor] | dict) -> None:
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.zero_grad()


# ---------------------------------------------------------------------------
# broadcasting helper
# ---------------------------------------------------------------------------

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise and linear-algebra ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def bwd(gout):
        return _unbroadcast(gout, a.data.shape), _unbroadcast(gout, b.data.shape)

    return _emit("add", (a, b), out, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def bwd(gout):
        return _unbroadcast(gout, a.data.shape), _unbroadcast(-gout, b.data.shape)

    return _emit("sub", (a, b), out, bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    ad, bd = a.data, b.data

    def bwd(gout):
        return _unbroadcast(gout * bd, ad.shape), _unbroadcast(gout * ad, bd.shape)

    return _emit("mul", (a, b), out, bwd)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bwd(gout):
        return (gout * c,)

    return _emit("scale", (a,), a.data * c, bwd)


def shift(a: Tensor, c: float) -> Tensor:
    def bwd(gout):
        return (gout,)

    return _emit("shift", (a,), a.data + float(c), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data
    ad, bd = a.data, b.data

    def bwd(gout):
        return gout @ bd.T, ad.T @ gout

    return _emit("matmul", (a, b), out, bwd)


def transpose(a: Tensor) -> Tensor:
    def bwd(gout):
        return (gout.T,)

    return _emit("transpose", (a,), a.data.T.copy(), bwd)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bwd(gout):
        return (gout.reshape(old),)

    return _emit("reshape", (a,), a.data.reshape(shape).copy(), bwd)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def bwd(gout):
        return (np.broadcast_to(gout, shape).copy(),)

    return _emit("sum_all", (a,), np.asarray(a.data.sum()), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    shape = a.data.shape

    def bwd(gout):
        return (np.broadcast_to(gout / n, shape).copy(),)

    return _emit("mean_all", (a,), np.asarray(a.data.mean()), bwd)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    shape = a.data.shape

    def bwd(gout):
        return (np.broadcast_to(np.expand_dims(gout, axis), shape).copy(),)

    return _emit("sum_axis", (a,), a.data.sum(axis=axis), bwd)


def mean_axis(a: Tensor, axis: int) -> Tensor:
    n = a.data.shape[axis]
    shape = a.data.shape

    def bwd(gout):
        return (np.broadcast_to(np.expand_dims(gout / n, axis), shape).copy(),)

    return _emit("mean_axis", (a,), a.data.mean(axis=axis), bwd)


def max_axis(a: Tensor, axis: int) -> Tensor:
    """Max reduction; the backward routes to the first argmax (ties)."""
    out = a.data.max(axis=axis)
    arg = a.data.argmax(axis=axis)
    shape = a.data.shape

    def bwd(gout):
        g = np.zeros(shape)
        np.put_along_axis(g, np.expand_dims(arg, axis),
                          np.expand_dims(gout, axis), axis)
        return (g,)

    return _emit("max_axis", (a,), out, bwd)


def abs_sum(a: Tensor) -> Tensor:
    """L1 norm; subgradient sign(x), 0 at 0."""
    sgn = np.sign(a.data)

    def bwd(gout):
        return (gout * sgn,)

    return _emit("abs_sum", (a,), np.asarray(np.abs(a.data).sum()), bwd)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    y = out

    def bwd(gout):
        return (gout * y * (1.0 - y),)

    return _emit("sigmoid", (a,), out, bwd)


def gelu(a: Tensor) -> Tensor:
    x = np.ascontiguousarray(a.data)
    out = kernels.gelu(x)

    def bwd(gout):
        return (kernels.gelu_bwd(x, np.ascontiguousarray(gout)),)

    return _emit("gelu", (a,), out, bwd)


def logit(a: Tensor, eps: float = _LOGIT_EPS) -> Tensor:
    """log(x / (1-x)) on x clipped to [eps, 1-eps]; zero grad where clipped."""
    x = np.clip(a.data, eps, 1.0 - eps)
    inside = (a.data > eps) & (a.data < 1.0 - eps)
    out = np.log(x) - np.log1p(-x)
    denom = x * (1.0 - x)

    def bwd(gout):
        return (np.where(inside, gout / denom, 0.0),)

    return _emit("logit", (a,), out, bwd)


def softmax_rows(m: Tensor) -> Tensor:
    """Row softmax, stabilized by row-max subtraction.

    Raises on non-finite input; output rows sum to 1 within 1e-12.
    """
    if m.data.ndim != 2:
        raise ValueError("softmax_rows expects a matrix")
    if not np.all(np.isfinite(m.data)):
        raise ValueError("non-finite logits")
    y = kernels.softmax_rows(np.ascontiguousarray(m.data))

    def bwd(gout):
        return (kernels.softmax_rows_bwd(y, np.ascontiguousarray(gout)),)

    return _emit("softmax_rows", (m,), y, bwd)


def layer_norm_rows(x: Tensor, gamma: Tensor, beta: Tensor,
                    eps: float = 1e-5) -> Tensor:
    """Per-row layer normalization with learned gain/bias."""
    if x.data.ndim != 2:
        raise ValueError("layer_norm_rows expects a matrix")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data
    gdat = gamma.data

    def bwd(gout):
        gxhat = gout * gdat
        m1 = gxhat.mean(axis=1, keepdims=True)
        m2 = (gxhat * xhat).mean(axis=1, keepdims=True)
        gx = inv_std * (gxhat - m1 - xhat * m2)
        ggamma = (gout * xhat).sum(axis=0)
        gbeta = gout.sum(axis=0)
        return gx, ggamma, gbeta

    return _emit("layer_norm_rows", (x, gamma, beta), out, bwd)


# ---------------------------------------------------------------------------
# structure ops
# ---------------------------------------------------------------------------

def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    out = np.concatenate([p.data for p in parts], axis=0)
    sizes = [p.data.shape[0] for p in parts]

    def bwd(gout):
        grads = []
        start = 0
        for s in sizes:
            grads.append(gout[start:start + s])
            start += s
        return tuple(grads)

    return _emit("concat_rows", parts, out, bwd)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = tuple(parts)
    out = np.concatenate([p.data for p in parts], axis=1)
    sizes = [p.data.shape[1] for p in parts]

    def bwd(gout):
        grads = []
        start = 0
        for s in sizes:
            grads.append(gout[:, start:start + s])
            start += s
        return tuple(grads)

    return _emit("concat_cols", parts, out, bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.data.shape

    def bwd(gout):
        g = np.zeros(shape)
        g[:, start:stop] = gout
        return (g,)

    return _emit("slice_cols", (a,), a.data[:, start:stop].copy(), bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.data.shape

    def bwd(gout):
        g = np.zeros(shape)
        np.add.at(g, idx, gout)
        return (g,)

    return _emit("gather_rows", (a,), a.data[idx].copy(), bwd)


def bucket_lookup(table: Tensor, idx: np.ndarray) -> Tensor:
    """Gather per-head bucket values: table (B, H), idx (n, n) -> (H, n, n).

    The bucketization that produced ``idx`` is piecewise constant, so all
    gradient flows into the table, none into the bucketized quantity.
    """
    if table.data.ndim != 2:
        raise ValueError("bucket table must be (buckets, heads)")
    idx = np.asarray(idx, dtype=np.int64)
    out = np.ascontiguousarray(table.data[idx].transpose(2, 0, 1))
    shape = table.data.shape

    def bwd(gout):
        g = np.zeros(shape)
        kernels.bucket_scatter_add(g, idx, np.ascontiguousarray(gout))
        return (g,)

    return _emit("bucket_lookup", (table,), out, bwd)


def take_plane(a: Tensor, index: int) -> Tensor:
    """Select one slice along axis 0 of a stacked tensor."""
    if not (0 <= index < a.data.shape[0]):
        raise IndexError("plane index out of range")
    shape = a.data.shape

    def bwd(gout):
        g = np.zeros(shape)
        g[index] = gout
        return (g,)

    return _emit("take_plane", (a,), a.data[index].copy(), bwd)


def overwrite(a: Tensor, idx, values) -> Tensor:
    """Copy of a 1-D tensor with ``a[idx] = values``; overwritten slots are a
    stop-gradient (they receive a constant, so no grad flows back there)."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError("overwrite index out of range")
    out = a.data.copy()
    out[idx] = np.asarray(values, dtype=np.float64)
    shape = a.data.shape

    def bwd(gout):
        g = gout.copy()
        g[idx] = 0.0
        return (g,)

    return _emit("overwrite", (a,), out, bwd)


# ---------------------------------------------------------------------------
# fused losses
# ---------------------------------------------------------------------------

def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy over raw logits (numerically stable)."""
    x = logits.data
    t = np.asarray(targets, dtype=np.float64)
    loss = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    n = x.size

    def bwd(gout):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (gout * (s - t) / n,)

    return _emit("bce_with_logits", (logits,), np.asarray(loss.mean()), bwd)


def cross_entropy_logits(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of one 1-D logit vector against a class index."""
    x = logits.data
    if x.ndim != 1:
        raise ValueError("cross_entropy_logits expects a 1-D logit vector")
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    probs = np.exp(x - lse)

    def bwd(gout):
        g = probs.copy()
        g[label] -= 1.0
        return (gout * g,)

    return _emit("cross_entropy_logits", (logits,), np.asarray(lse - x[label]), bwd)


# ---------------------------------------------------------------------------
# parameter construction and the gradient-check oracle
# ---------------------------------------------------------------------------

def affine_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[Tensor, Tensor]:
    """Weight ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), bias zero."""
    bound = 1.0 / np.sqrt(fan_in)
    w = Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True)
    return w, b


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor,
                      eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |cd|).

    ``f`` must be a deterministic tensor->scalar map. Perturbs x.data in
    place and restores it (the one sanctioned mutation; this is the
    verification oracle and runs single-threaded).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(tape, loss)
    analytic = (x.grad if x.grad is not None else np.zeros_like(x.data)).ravel()
    flat = x.data.ravel()
    max_err = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x).item()
        flat[i] = orig - eps
        fm = f(x).item()
        flat[i] = orig
        central = (fp - fm) / (2.0 * eps)
        err = abs(analytic[i] - central) / max(1.0, abs(central))
        if err > max_err:
            max_err = err
    x.zero_grad()
    return max_err
