"""Minimal reverse-mode differentiation over dense numpy arrays.

Every primitive runs eagerly. While a :class:`Tape` is active, any primitive
with at least one tracked input is appended to the tape, so gradients are only
ever propagated through the part of the computation that depends on the
watched tensors. Everything else is treated as a constant.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

CHECK_FINITE = True

_local = threading.local()


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def _tapes() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


class Tensor:
    __slots__ = ("data", "__weakref__")

    def __init__(self, data: Any):
        if isinstance(data, np.ndarray) and data.dtype.kind == "f":
            self.data = data
        elif isinstance(data, np.floating):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data.item()

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, data={self.data!r})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    op: "Op"
    inputs: tuple
    out: Tensor
    ctx: Any
    kwargs: dict


@dataclass(frozen=True)
class Op:
    name: str
    forward: Callable
    backward: Callable


@dataclass(eq=False)
class Tape:
    """Ordered record of primitive ops (a gradient record).

    Use as a context manager; call :meth:`watch` on leaves before computing.
    """

    nodes: list = field(default_factory=list)
    _tracked: dict = field(default_factory=dict)
    _leaves: dict = field(default_factory=dict)

    def watch(self, *tensors: Tensor) -> None:
        for t in tensors:
            self._leaves[id(t)] = t
            self._tracked[id(t)] = t

    def tracks(self, t: Tensor) -> bool:
        return id(t) in self._tracked

    def __enter__(self) -> "Tape":
        _tapes().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tapes()
        stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, op: Op, inputs: tuple, out: Tensor, ctx: Any, kwargs: dict) -> None:
        self.nodes.append(_Node(op, inputs, out, ctx, kwargs))
        self._tracked[id(out)] = out

    def gradient(self, output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
        if output.size != 1:
            raise ValueError(f"grad: output must be a scalar, got shape {output.shape}")
        for t in wrt:
            if id(t) not in self._leaves:
                raise ValueError(f"grad: tensor of shape {t.shape} was not watched on this tape")
        grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            in_grads = node.op.backward(node.ctx, g, **node.kwargs)
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or id(t) not in self._tracked:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        out = []
        for t in wrt:
            g = grads.get(id(t))
            out.append(np.zeros_like(t.data) if g is None else g.reshape(t.shape))
        return out

    def replay(self, output: Tensor) -> np.ndarray:
        """Re-run the recorded ops from the current leaf values."""
        values = {k: t.data for k, t in self._leaves.items()}
        for node in self.nodes:
            args = [values.get(id(t), t.data) for t in node.inputs]
            out, _ = node.op.forward(*args, **node.kwargs)
            values[id(node.out)] = out
        if id(output) not in values:
            raise ValueError("replay: output was not produced on this tape")
        return values[id(output)]


def grad(record: Tape, output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    return record.gradient(output, wrt)


def _apply(op: Op, *inputs: Tensor, **kwargs) -> Tensor:
    arrays = [t.data for t in inputs]
    out_arr, ctx = op.forward(*arrays, **kwargs)
    if CHECK_FINITE and not np.isfinite(out_arr).all():
        raise NonFiniteError(f"{op.name}: produced non-finite values")
    out = Tensor(out_arr)
    for tape in _tapes():
        for t in inputs:
            if id(t) in tape._tracked:
                tape._record(op, inputs, out, ctx, kwargs)
                break
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(name: str, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# --- elementwise binary -----------------------------------------------------


def _add_fwd(a, b):
    _check_broadcast("add", a, b)
    return a + b, (a.shape, b.shape)


def _add_bwd(ctx, g):
    sa, sb = ctx
    return _unbroadcast(g, sa), _unbroadcast(g, sb)


def _sub_fwd(a, b):
    _check_broadcast("sub", a, b)
    return a - b, (a.shape, b.shape)


def _sub_bwd(ctx, g):
    sa, sb = ctx
    return _unbroadcast(g, sa), _unbroadcast(-g, sb)


def _mul_fwd(a, b):
    _check_broadcast("mul", a, b)
    return a * b, (a, b)


def _mul_bwd(ctx, g):
    a, b = ctx
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


ADD = Op("add", _add_fwd, _add_bwd)
SUB = Op("sub", _sub_fwd, _sub_bwd)
MUL = Op("mul", _mul_fwd, _mul_bwd)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # Python scalars adopt the partner's dtype so float32 graphs stay float32.
    if isinstance(a, Tensor) and isinstance(b, (int, float)):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(b, Tensor) and isinstance(a, (int, float)):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def add(a, b) -> Tensor:
    return _apply(ADD, *_pair(a, b))


def sub(a, b) -> Tensor:
    return _apply(SUB, *_pair(a, b))


def mul(a, b) -> Tensor:
    return _apply(MUL, *_pair(a, b))


# --- matmul -----------------------------------------------------------------


def _matmul_fwd(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a, b)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    return out, (a, b)


def _matmul_bwd(ctx, g):
    a, b = ctx
    ga = np.matmul(g, np.swapaxes(b, -1, -2))
    gb = np.matmul(np.swapaxes(a, -1, -2), g)
    return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)


MATMUL = Op("matmul", _matmul_fwd, _matmul_bwd)


def matmul(a, b) -> Tensor:
    return _apply(MATMUL, as_tensor(a), as_tensor(b))


# --- elementwise unary ------------------------------------------------------


def _sigmoid_fwd(x):
    out = 0.5 * (1.0 + np.tanh(0.5 * x))
    return out, out


def _tanh_fwd(x):
    out = np.tanh(x)
    return out, out


def _exp_fwd(x):
    with np.errstate(over="ignore"):  # overflow is reported by the finiteness check
        out = np.exp(x)
    return out, out


def _log_fwd(x):
    if (x <= 0).any():
        raise NonFiniteError("log: input must be strictly positive")
    return np.log(x), x


SIGMOID = Op("sigmoid", _sigmoid_fwd, lambda out, g: (g * out * (1.0 - out),))
TANH = Op("tanh", _tanh_fwd, lambda out, g: (g * (1.0 - out * out),))
EXP = Op("exp", _exp_fwd, lambda out, g: (g * out,))
LOG = Op("log", _log_fwd, lambda x, g: (g / x,))


def sigmoid(x) -> Tensor:
    return _apply(SIGMOID, as_tensor(x))


def tanh(x) -> Tensor:
    return _apply(TANH, as_tensor(x))


def exp(x) -> Tensor:
    return _apply(EXP, as_tensor(x))


def log(x) -> Tensor:
    return _apply(LOG, as_tensor(x))


# --- softmax family ---------------------------------------------------------


def _softmax_fwd(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)
    return out, out


def _softmax_bwd(out, g, axis=-1):
    return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)


def _log_softmax_fwd(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    return out, out


def _log_softmax_bwd(out, g, axis=-1):
    return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)


SOFTMAX = Op("softmax", _softmax_fwd, _softmax_bwd)
LOG_SOFTMAX = Op("log_softmax", _log_softmax_fwd, _log_softmax_bwd)


def softmax(x, axis: int = -1) -> Tensor:
    return _apply(SOFTMAX, as_tensor(x), axis=axis)


def log_softmax(x, axis: int = -1) -> Tensor:
    return _apply(LOG_SOFTMAX, as_tensor(x), axis=axis)


# --- reductions -------------------------------------------------------------


def _sum_fwd(x, axis=None, keepdims=False):
    return np.sum(x, axis=axis, keepdims=keepdims), (x.shape, axis, keepdims)


def _sum_bwd(ctx, g, axis=None, keepdims=False):
    shape, axis, keepdims = ctx
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape).copy(),)


def _l2norm_fwd(x):
    n = np.sqrt(np.sum(x * x))
    return np.asarray(n), (x, n)


def _l2norm_bwd(ctx, g):
    x, n = ctx
    if n == 0.0:
        return (np.zeros_like(x),)
    return (g * x / n,)


SUM = Op("sum", _sum_fwd, _sum_bwd)
L2NORM = Op("l2norm", _l2norm_fwd, _l2norm_bwd)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    return _apply(SUM, as_tensor(x), axis=axis, keepdims=keepdims)


def l2norm(x) -> Tensor:
    """Euclidean norm over all elements."""
    return _apply(L2NORM, as_tensor(x))


# --- structural -------------------------------------------------------------


def _concat_fwd(*arrays, axis=-1):
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError:
        shapes = " and ".join(str(a.shape) for a in arrays)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    sizes = [a.shape[axis] for a in arrays]
    return out, np.cumsum(sizes)[:-1]


def _concat_bwd(splits, g, axis=-1):
    return tuple(np.split(g, splits, axis=axis))


CONCAT = Op("concat", _concat_fwd, _concat_bwd)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    return _apply(CONCAT, *[as_tensor(t) for t in tensors], axis=axis)


def _slice_fwd(x, key=None):
    return x[key], x.shape


def _slice_bwd(shape, g, key=None):
    out = np.zeros(shape, dtype=g.dtype)
    out[key] = g
    return (out,)


SLICE = Op("slice", _slice_fwd, _slice_bwd)


def slice_(x, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    return _apply(SLICE, as_tensor(x), key=key)


def _reshape_fwd(x, shape=None):
    try:
        return x.reshape(shape), x.shape
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} to {shape}") from None


RESHAPE = Op("reshape", _reshape_fwd, lambda old, g, shape=None: (g.reshape(old),))


def reshape(x, shape) -> Tensor:
    return _apply(RESHAPE, as_tensor(x), shape=tuple(shape))


def _embed_fwd(table, idx=None):
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding: index out of range for table {table.shape}")
    return table[idx], table.shape


def _embed_bwd(shape, g, idx=None):
    out = np.zeros(shape, dtype=g.dtype)
    np.add.at(out, idx, g)
    return (out,)


EMBED = Op("embedding", _embed_fwd, _embed_bwd)


def embedding(table, idx) -> Tensor:
    """Row lookup ``table[idx]``."""
    return _apply(EMBED, as_tensor(table), idx=np.asarray(idx, dtype=np.int64))


def _pick_fwd(x, idx=None):
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"pick: incompatible shapes {x.shape} and {idx.shape}")
    return x[np.arange(x.shape[0]), idx], x.shape


def _pick_bwd(shape, g, idx=None):
    out = np.zeros(shape, dtype=g.dtype)
    out[np.arange(shape[0]), idx] = g
    return (out,)


PICK = Op("pick", _pick_fwd, _pick_bwd)


def pick(x, idx) -> Tensor:
    """Select ``x[b, idx[b]]`` for every row ``b``."""
    return _apply(PICK, as_tensor(x), idx=np.asarray(idx, dtype=np.int64))


# --- numerical oracle -------------------------------------------------------


def finite_diff_grad(f: Callable[[np.ndarray], float], v: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0:
        raise ValueError("finite_diff_grad: h must be positive")
    v = np.array(v, dtype=np.float64)
    out = np.zeros_like(v)
    flat = v.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = float(f(v))
        flat[i] = old - h
        fm = float(f(v))
        flat[i] = old
        g[i] = (fp - fm) / (2.0 * h)
    return out
