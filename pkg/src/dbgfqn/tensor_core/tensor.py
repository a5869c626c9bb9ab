"""Dense tensors with a reverse-mode differentiation tape.

Operations only record onto a tape while one is active (``with Tape() as tape``).
Outside a tape every op is a plain numpy evaluation, which is what acting and
target-network evaluation use.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

ArrayLike = Union[np.ndarray, float, int, Sequence]

_local = threading.local()


class TensorError(Exception):
    """Base class for tensor_core failures."""


class DimensionError(TensorError, ValueError):
    pass


class DegenerateMaskError(TensorError, ValueError):
    pass


class TapeConsumedError(TensorError, RuntimeError):
    pass


class ContractError(TensorError, ValueError):
    pass


# ---------------------------------------------------------------------------
# precision


def default_dtype() -> np.dtype:
    return getattr(_local, "dtype", np.dtype(np.float32))


@contextlib.contextmanager
def wide_precision() -> Iterator[None]:
    """Create new tensors in extended precision inside the block (used for gradient checks).

    ``np.longdouble`` is 80-bit on x86 Linux, which keeps finite-difference
    roundoff far below the checked tolerance; where it aliases float64 this is
    plain double precision.
    """
    prev = default_dtype()
    _local.dtype = np.dtype(np.longdouble)
    try:
        yield
    finally:
        _local.dtype = prev


# ---------------------------------------------------------------------------
# tape


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended as ops execute, so inputs always precede the ops that
    consume them. A tape supports exactly one backward pass.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:  # pragma: no cover - misuse
            stack.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, inputs: tuple, output: "Tensor", backward: Callable) -> None:
        output._node = (self, len(self.nodes))
        output.requires_grad = True
        self.nodes.append(_Node(inputs, output, backward))

    def backward(self, loss: "Tensor") -> None:
        if self.consumed:
            raise TapeConsumedError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node[0] is not self:
            raise ContractError("loss was not produced under this tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.backward(g)
            for inp, gi in zip(node.inputs, in_grads):
                if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                if inp._node is None:
                    inp._accumulate(gi)
                else:
                    key = id(inp)
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
        self.consumed = True
        self.nodes = []


def backward(loss: "Tensor") -> None:
    """Backpropagate from a scalar loss through the tape that produced it."""
    if loss._node is None:
        raise ContractError("loss was not produced under an active tape")
    tape = loss._node[0]
    tape.backward(loss)


# ---------------------------------------------------------------------------
# tensor


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None, name: str = ""):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = default_dtype()
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._node = None
        self.name = name

    # basic properties -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tape_node(self):
        return self._node

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        g = np.asarray(g, dtype=self.data.dtype)
        if g.shape != self.data.shape:
            g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # operators ------------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _raise_item(t: Tensor):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _const(x, like: np.ndarray):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _needs_record(*inputs) -> Optional[Tape]:
    tape = active_tape()
    if tape is None:
        return None
    for t in inputs:
        if isinstance(t, Tensor) and t.requires_grad:
            return tape
    return None


def custom_op(inputs: Sequence[Tensor], out: np.ndarray, backward_fn: Callable) -> Tensor:
    """Wrap a precomputed result as a differentiable op.

    ``backward_fn(grad_out)`` must return one gradient (or None) per input.
    """
    result = Tensor(out)
    tape = _needs_record(*inputs)
    if tape is not None:
        tape.record(tuple(inputs), result, backward_fn)
    return result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _const(a, b.data)
    if not isinstance(b, Tensor):
        b = _const(b, a.data)
    sa, sb = a.shape, b.shape
    return custom_op((a, b), a.data + b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _const(a, b.data)
    if not isinstance(b, Tensor):
        b = _const(b, a.data)
    sa, sb = a.shape, b.shape
    return custom_op((a, b), a.data - b.data, lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _const(a, b.data)
    if not isinstance(b, Tensor):
        b = _const(b, a.data)
    ad, bd = a.data, b.data
    return custom_op(
        (a, b),
        ad * bd,
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _const(a, b.data)
    if not isinstance(b, Tensor):
        b = _const(b, a.data)
    ad, bd = a.data, b.data
    out = ad / bd
    return custom_op(
        (a, b),
        out,
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def square(x: Tensor) -> Tensor:
    xd = x.data
    return custom_op((x,), xd * xd, lambda g: (2.0 * g * xd,))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return custom_op((x,), out, lambda g: (g * out,))


def absolute(x: Tensor) -> Tensor:
    xd = x.data
    return custom_op((x,), np.abs(xd), lambda g: (g * np.sign(xd),))


def where(cond: np.ndarray, a: Tensor, b) -> Tensor:
    """Select from ``a`` where ``cond`` holds, else from ``b`` (cond is not differentiated)."""
    cond = np.asarray(cond, dtype=bool)
    b = _const(b, a.data)
    sa, sb = a.shape, b.shape
    return custom_op(
        (a, b),
        np.where(cond, a.data, b.data),
        lambda g: (_unbroadcast(np.where(cond, g, 0.0), sa), _unbroadcast(np.where(cond, 0.0, g), sb)),
    )


# ---------------------------------------------------------------------------
# pointwise nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # sigma(x) = (1 + tanh(x/2)) / 2: overflow-free and cheaper than a sign split
    out = np.multiply(x, 0.5, dtype=np.result_type(x, np.float32))
    if out.ndim == 0:
        return 0.5 + 0.5 * np.tanh(out)
    np.tanh(out, out=out)
    out *= 0.5
    out += 0.5
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return custom_op((x,), out, lambda g: (g * out * (1.0 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return custom_op((x,), out, lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return custom_op((x,), np.where(mask, x.data, 0.0).astype(x.dtype), lambda g: (g * mask,))


_POINTWISE = {"sigmoid": sigmoid, "tanh": tanh, "relu": relu}


def pointwise(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _POINTWISE[kind]
    except KeyError:
        raise ValueError(f"unknown pointwise kind {kind!r}; expected one of {sorted(_POINTWISE)}") from None
    return fn(x)


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != (b.shape[-2] if b.ndim >= 2 else b.shape[0]):
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {a.shape} @ {b.shape}")
    out = ad @ bd

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return custom_op((a, b), out, back)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = x.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(x.dtype, copy=True),)

    return custom_op((x,), np.asarray(out), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return custom_op((x,), x.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(axes))
    return custom_op((x,), np.transpose(x.data, axes), lambda g: (np.transpose(g, inv),))


def getitem(x: Tensor, index) -> Tensor:
    shape, dtype = x.shape, x.dtype

    fancy = any(isinstance(i, (np.ndarray, list)) for i in (index if isinstance(index, tuple) else (index,)))

    def back(g):
        out = np.zeros(shape, dtype=dtype)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return custom_op((x,), x.data[index], back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return custom_op(tuple(tensors), out, lambda g: tuple(np.split(g, splits, axis=axis)))


def take_last(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather ``x[..., index[...]]`` along the last axis (index has x's leading shape)."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise DimensionError(f"take_last index shape {index.shape} does not match {x.shape[:-1]}")
    idx = index[..., None]
    out = np.take_along_axis(x.data, idx, axis=-1)[..., 0]

    def back(g):
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return custom_op((x,), out, back)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def back(g):
        out = np.zeros(shape, dtype=table.dtype)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (out,)

    return custom_op((table,), table.data[ids], back)


# ---------------------------------------------------------------------------
# normalisation


def softmax_last_dim(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is False get exactly zero weight."""
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not mask.any(axis=-1).all():
            raise DegenerateMaskError("softmax slice has no unmasked entries")
        shifted = np.where(mask, xd, -np.inf)
        mx = shifted.max(axis=-1, keepdims=True)
        e = np.where(mask, np.exp(shifted - mx), 0.0).astype(xd.dtype)
    else:
        e = np.exp(xd - xd.max(axis=-1, keepdims=True))
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return custom_op((x,), out, back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm width {d} does not match gain {gain.shape} / bias {bias.shape}")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        gx = g * gain.data
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(xd.ndim - 1))
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return custom_op((x, gain, bias), out, back)
