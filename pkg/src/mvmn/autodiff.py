"""Minimal dense reverse-mode differentiation on numpy arrays.

Operations executed inside an active :class:`Tape` whose inputs require
gradients are recorded together with a pullback.  ``Tape.backward`` walks the
record in reverse order and accumulates (``+=``) cotangents into every tensor
that requires a gradient.  Outside a tape the same functions are plain numpy
computations, which is what evaluation uses.

Example::

    x = Tensor(np.array([0.3, -0.2]), requires_grad=True)
    with Tape() as tape:
        y = sum_all(tanh(x))
    tape.backward(y)
    x.grad  # 1 - tanh(x)**2
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

_state = threading.local()

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    """An array with an optional gradient buffer of the same shape."""

    __slots__ = ("data", "grad", "requires_grad", "name")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __rtruediv__(self, other):
        return div(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


class Tape:
    """Records primitives executed while it is active on the current thread."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._swept = False

    def __enter__(self) -> "Tape":
        stack = _stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().pop()

    def record(self, out: Tensor, inputs: Sequence[Tensor], pullback: Callable) -> None:
        self.nodes.append((out, tuple(inputs), pullback))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if self._swept:
            raise RuntimeError("backward already ran on this tape; re-run the forward pass")
        self._swept = True
        if seed is None:
            if loss.data.size != 1:
                raise ShapeError("backward needs a scalar loss or an explicit seed")
            seed = np.ones_like(loss.data)
        # intermediate cotangents live here; leaves accumulate into .grad
        cot: dict[int, np.ndarray] = {id(loss): np.asarray(seed, dtype=loss.data.dtype)}
        recorded = {id(out) for out, _, _ in self.nodes}
        if id(loss) not in recorded and loss.requires_grad:
            _accumulate_leaf(loss, cot[id(loss)])
        for out, inputs, pullback in reversed(self.nodes):
            g = cot.pop(id(out), None)
            if g is None:
                continue
            grads = pullback(g)
            for inp, gi in zip(inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                if id(inp) in recorded:
                    prev = cot.get(id(inp))
                    cot[id(inp)] = gi if prev is None else prev + gi
                else:
                    _accumulate_leaf(inp, gi)
        self.nodes.clear()


def _accumulate_leaf(t: Tensor, g: np.ndarray) -> None:
    g = np.asarray(g, dtype=t.data.dtype).reshape(t.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DEFAULT_DTYPE))


def _result(value: np.ndarray, inputs: Sequence[Tensor], pullback: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    tape = active_tape()
    if needs and tape is not None:
        tape.record(out, inputs, pullback)
    return out


def scatter_add_rows(n_rows: int, ids: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``out[ids[k]] += values[k]`` for an (n_rows, ...) zero array, deterministically."""
    ids = np.asarray(ids, dtype=np.intp).reshape(-1)
    out = np.zeros((n_rows, *values.shape[1:]), dtype=values.dtype)
    if len(ids) == 0:
        return out
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    out[sorted_ids[starts]] = np.add.reduceat(values[order], starts, axis=0)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    """Hadamard (elementwise) product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


hadamard = mul


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data
    return _result(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[0 if b.ndim == 1 else -2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def pullback(g):
        ad, bd = a.data, b.data
        if bd.ndim == 1:
            ga = np.expand_dims(g, -1) * bd
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1) if ad.ndim > 1 else ad * g
            return _unbroadcast(ga, a.shape), gb
        if ad.ndim == 1:
            ga = np.matmul(bd, g[..., None])[..., 0] if g.ndim > 1 else bd @ g
            gb = np.multiply.outer(ad, g) if g.ndim == 1 else ad[:, None] * g[..., None, :]
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), pullback)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _result(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return _result(out, (x,), lambda g: (g * out * (1.0 - out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


def clip(x, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero where the clamp is active."""
    x = as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)
    return _result(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return _result(out, (x,), lambda g: (np.where(pos, g, slope * g),))


def elu(x, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    neg = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg)
    return _result(out, (x,), lambda g: (np.where(pos, g, g * (neg + alpha)),))


def softmax(x, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; masked-out entries get probability exactly 0.

    Rows whose entries are all masked produce zeros.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.exp(z - zmax)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    denom = e.sum(axis=axis, keepdims=True)
    out = e / np.where(denom > 0, denom, 1.0)

    def pullback(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _result(out, (x,), pullback)


def max_over_axis(x, mask: np.ndarray | None = None, axis: int = -1) -> Tensor:
    """Maximum along ``axis`` ignoring masked entries.

    Ties go to the lowest index.  Slices with no valid entry yield 0 and pass
    no gradient.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), z.shape)
        z = np.where(mask, z, -np.inf)
    idx = np.argmax(z, axis=axis)  # first occurrence on ties
    picked = np.take_along_axis(z, np.expand_dims(idx, axis), axis=axis)
    valid = np.isfinite(picked)
    out = np.squeeze(np.where(valid, picked, 0.0), axis=axis)

    def pullback(g):
        gx = np.zeros_like(x.data)
        gv = np.where(valid, np.expand_dims(g, axis), 0.0)
        np.put_along_axis(gx, np.expand_dims(idx, axis), gv, axis=axis)
        return (gx,)

    return _result(out, (x,), pullback)


def dropout(x, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: identity when ``train`` is false or ``p`` is 0."""
    x = as_tensor(x)
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout at train time needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Scale to unit norm along ``axis``; zero vectors stay zero with zero gradient."""
    x = as_tensor(x)
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    out = np.where(norm > 0, x.data / safe, 0.0)

    def pullback(g):
        proj = np.sum(g * out, axis=axis, keepdims=True)
        return (np.where(norm > 0, (g - out * proj) / safe, 0.0),)

    return _result(out, (x,), pullback)


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    return _result(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def sum(x, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    if axis is None:
        return sum_all(x)
    x = as_tensor(x)
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def pullback(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(out, (x,), pullback)


def mean(x, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis), 1.0 / n)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: tuple[int, ...] | None = None) -> Tensor:
    x = as_tensor(x)
    perm = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(perm))
    return _result(np.transpose(x.data, perm), (x,), lambda g: (np.transpose(g, inverse),))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if not xs:
        raise ShapeError("concat: no inputs")
    ax = axis % xs[0].ndim
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != len(ref) or any(x.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {[t.shape for t in xs]} on axis {axis}")
    out = np.concatenate([x.data for x in xs], axis=ax)
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def pullback(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(xs))
        )

    return _result(out, xs, pullback)


def stack(xs: Sequence, axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise ShapeError(f"stack: shapes differ {sorted(shapes)}")
    out = np.stack([x.data for x in xs], axis=axis)
    return _result(
        out,
        xs,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(xs))),
    )


def pad_to(x, length: int, axis: int = -1) -> Tensor:
    """Right-pad with zeros along ``axis`` up to ``length``."""
    x = as_tensor(x)
    ax = axis % x.ndim
    n = x.shape[ax]
    if n > length:
        raise ShapeError(f"pad_to: size {n} exceeds target length {length}")
    widths = [(0, 0)] * x.ndim
    widths[ax] = (0, length - n)
    out = np.pad(x.data, widths)
    return _result(out, (x,), lambda g: (np.take(g, np.arange(n), axis=ax),))


def index(x, key) -> Tensor:
    """Basic or advanced numpy indexing; duplicate indices accumulate."""
    x = as_tensor(x)
    out = x.data[key]

    def pullback(g):
        if isinstance(key, np.ndarray) and key.dtype.kind in "iu" and key.ndim == 1:
            return (scatter_add_rows(x.shape[0], key, g),)
        gx = np.zeros_like(x.data)
        np.add.at(gx, key, g)
        return (gx,)

    return _result(np.array(out, copy=True), (x,), pullback)


def embedding_lookup(table, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` selected by integer ``ids`` (any shape)."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding_lookup: ids outside [0, {table.shape[0]})")
    out = table.data[ids]

    def pullback(g):
        return (scatter_add_rows(table.shape[0], ids, g.reshape(-1, *table.shape[1:])),)

    return _result(out, (table,), pullback)


# ---------------------------------------------------------------------------
# fused recurrent cell


def lstm_cell(x, h_prev, c_prev, w_x, w_h, b) -> tuple[Tensor, Tensor]:
    """One LSTM step for a batch of rows.

    ``x`` is (B, d), states are (B, H), ``w_x`` is (d, 4H), ``w_h`` is (H, 4H)
    and ``b`` is (4H,).  Gate blocks are ordered input, forget, output,
    candidate.
    """
    x, h_prev, c_prev, w_x, w_h, b = map(as_tensor, (x, h_prev, c_prev, w_x, w_h, b))
    hidden = w_h.shape[0]
    if (
        w_x.shape[1] != 4 * hidden
        or w_h.shape != (hidden, 4 * hidden)
        or b.shape != (4 * hidden,)
        or x.shape[-1] != w_x.shape[0]
        or h_prev.shape[-1] != hidden
        or c_prev.shape != h_prev.shape
    ):
        raise ShapeError(
            "lstm_cell: incompatible shapes "
            f"x={x.shape} h={h_prev.shape} c={c_prev.shape} "
            f"w_x={w_x.shape} w_h={w_h.shape} b={b.shape}"
        )
    z = x.data @ w_x.data + h_prev.data @ w_h.data + b.data
    i = _sigmoid(z[..., :hidden])
    f = _sigmoid(z[..., hidden : 2 * hidden])
    o = _sigmoid(z[..., 2 * hidden : 3 * hidden])
    cand = np.tanh(z[..., 3 * hidden :])
    c = f * c_prev.data + i * cand
    tc = np.tanh(c)
    h = o * tc

    h_out = Tensor(h, requires_grad=False)
    c_out = Tensor(c, requires_grad=False)
    inputs = (x, h_prev, c_prev, w_x, w_h, b)
    if not any(t.requires_grad for t in inputs):
        return h_out, c_out
    h_out.requires_grad = c_out.requires_grad = True
    tape = active_tape()
    if tape is None:
        return h_out, c_out

    # h and c are separate outputs; a joint node receives both cotangents
    joint = Tensor(np.concatenate([h, c], axis=-1), requires_grad=True)

    def joint_pullback(g):
        gh, gc = g[..., :hidden], g[..., hidden:]
        gc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                gc * cand * i * (1.0 - i),
                gc * c_prev.data * f * (1.0 - f),
                gh * tc * o * (1.0 - o),
                gc * i * (1.0 - cand * cand),
            ],
            axis=-1,
        )
        xd, hd = x.data, h_prev.data
        if xd.ndim == 1:
            gwx, gwh, gb = np.outer(xd, dz), np.outer(hd, dz), dz
        else:
            gwx = xd.reshape(-1, xd.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
            gwh = hd.reshape(-1, hidden).T @ dz.reshape(-1, dz.shape[-1])
            gb = dz.reshape(-1, dz.shape[-1]).sum(axis=0)
        return (dz @ w_x.data.T, dz @ w_h.data.T, gc * f, gwx, gwh, gb)

    tape.record(joint, inputs, joint_pullback)
    tape.record(h_out, (joint,), lambda g: (np.concatenate([g, np.zeros_like(c)], axis=-1),))
    tape.record(c_out, (joint,), lambda g: (np.concatenate([np.zeros_like(h), g], axis=-1),))
    return h_out, c_out


def lstm_sequence(x_seq, mask: np.ndarray, w_x, w_h, b) -> Tensor:
    """Run :func:`lstm_cell` over (B, T, d) inputs from a zero state.

    ``mask`` must be a prefix mask (each row valid up to its length).  Past a
    row's length its state is carried unchanged, so the returned (B, T, H)
    states satisfy ``[:, -1]`` = last real state.  Equivalent to unrolling
    the cell step by step, but recorded as one node and only computing the
    rows still active at each step.
    """
    x_seq, w_x, w_h, b = map(as_tensor, (x_seq, w_x, w_h, b))
    bsz, steps, _ = x_seq.shape
    hd = w_h.shape[0]
    if w_x.shape != (x_seq.shape[-1], 4 * hd) or w_h.shape != (hd, 4 * hd) or b.shape != (4 * hd,):
        raise ShapeError(
            f"lstm_sequence: incompatible shapes x={x_seq.shape} w_x={w_x.shape} w_h={w_h.shape} b={b.shape}"
        )
    mask = np.asarray(mask, dtype=bool).reshape(bsz, steps)
    lengths = mask.sum(axis=1)
    if not np.array_equal(mask, np.arange(steps)[None, :] < lengths[:, None]):
        raise ValueError("lstm_sequence needs a prefix mask")
    dtype = x_seq.data.dtype
    order = np.argsort(-lengths, kind="stable")
    inverse = np.argsort(order)
    active = (lengths[None, :] > np.arange(steps)[:, None]).sum(axis=1)  # rows live at step t
    wh = w_h.data
    # time-major, rows sorted by decreasing length: live rows are a prefix
    x_tm = np.ascontiguousarray(np.swapaxes(x_seq.data[order], 0, 1))  # (T, B, d)
    acts = x_tm @ w_x.data + b.data  # (T, B, 4H), overwritten with gate values
    cells = np.zeros((steps, bsz, hd), dtype=dtype)
    prev_c = np.zeros((steps, bsz, hd), dtype=dtype)
    outs = np.zeros((steps, bsz, hd), dtype=dtype)
    h = np.zeros((bsz, hd), dtype=dtype)
    c = np.zeros((bsz, hd), dtype=dtype)
    for t in range(steps):
        n = active[t]
        a = acts[t, :n]
        a += h[:n] @ wh
        # sigmoid(x) = (1 + tanh(x/2)) / 2, cheaper than expit here
        a[:, : 3 * hd] *= 0.5
        np.tanh(a, out=a)
        a[:, : 3 * hd] += 1.0
        a[:, : 3 * hd] *= 0.5
        prev_c[t, :n] = c[:n]
        c[:n] = a[:, hd : 2 * hd] * c[:n] + a[:, :hd] * a[:, 3 * hd :]
        h[:n] = a[:, 2 * hd : 3 * hd] * np.tanh(c[:n])
        cells[t, :n] = c[:n]
        outs[t] = h

    def pullback(g_out):
        g_tm = np.swapaxes(g_out[order], 0, 1)
        dz_all = np.zeros_like(acts)
        gh = np.zeros((bsz, hd), dtype=dtype)
        gc = np.zeros((bsz, hd), dtype=dtype)
        wh_t = np.ascontiguousarray(wh.T)
        for t in range(steps - 1, -1, -1):
            gh += g_tm[t]
            n = active[t]
            if n == 0:
                continue
            a = acts[t, :n]
            i, f, o, g = (a[:, k * hd : (k + 1) * hd] for k in range(4))
            tc = np.tanh(cells[t, :n])
            gh_n = gh[:n]
            gc_n = gc[:n] + gh_n * o * (1.0 - tc * tc)
            dz = dz_all[t, :n]
            dz[:, :hd] = gc_n * g * i * (1.0 - i)
            dz[:, hd : 2 * hd] = gc_n * prev_c[t, :n] * f * (1.0 - f)
            dz[:, 2 * hd : 3 * hd] = gh_n * tc * o * (1.0 - o)
            dz[:, 3 * hd :] = gc_n * i * (1.0 - g * g)
            gh[:n] = dz @ wh_t
            gc[:n] = gc_n * f
        flat = dz_all.reshape(-1, 4 * hd)
        h_prev = np.concatenate([np.zeros((1, bsz, hd), dtype=dtype), outs[:-1]], axis=0)
        g_x = np.swapaxes(dz_all @ w_x.data.T, 0, 1)[inverse]
        return (
            g_x,
            x_tm.reshape(-1, x_tm.shape[-1]).T @ flat,
            h_prev.reshape(-1, hd).T @ flat,
            flat.sum(axis=0),
        )

    out = np.ascontiguousarray(np.swapaxes(outs, 0, 1)[inverse])
    return _result(out, (x_seq, w_x, w_h, b), pullback)


def blend(mask: np.ndarray, new, old) -> Tensor:
    """``mask * new + (1 - mask) * old`` for a constant 0/1 ``mask``."""
    new, old = as_tensor(new), as_tensor(old)
    m = np.asarray(mask, dtype=new.data.dtype)
    out = m * new.data + (1.0 - m) * old.data
    return _result(
        out,
        (new, old),
        lambda g: (_unbroadcast(g * m, new.shape), _unbroadcast(g * (1.0 - m), old.shape)),
    )


# ---------------------------------------------------------------------------
# segment (ragged) operations over rows grouped by an integer id


def segment_sum(x, segment_ids: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of ``x`` that share a segment id; output has ``n_segments`` rows."""
    x = as_tensor(x)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != x.shape[:1]:
        raise ShapeError(f"segment_sum: ids {seg.shape} do not match rows of {x.shape}")
    out = scatter_add_rows(n_segments, seg, x.data)
    return _result(out, (x,), lambda g: (g[seg],))


def segment_softmax(x, segment_ids: np.ndarray, n_segments: int) -> Tensor:
    """Softmax over the rows of each segment, independently per trailing column."""
    x = as_tensor(x)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape != x.shape[:1]:
        raise ShapeError(f"segment_softmax: ids {seg.shape} do not match rows of {x.shape}")
    zmax = np.full((n_segments, *x.shape[1:]), -np.inf, dtype=x.data.dtype)
    np.maximum.at(zmax, seg, x.data)
    e = np.exp(x.data - zmax[seg])
    denom = scatter_add_rows(n_segments, seg, e)
    out = e / denom[seg]

    def pullback(g):
        inner = scatter_add_rows(n_segments, seg, g * out)
        return (out * (g - inner[seg]),)

    return _result(out, (x,), pullback)
