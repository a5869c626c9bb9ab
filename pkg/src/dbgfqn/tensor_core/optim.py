"""Adam optimizer, gradient clipping and gradient zeroing."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

from .tensor import Tensor, TensorError


class UninitializedGradientError(TensorError, RuntimeError):
    pass


Params = Union[Mapping[str, Tensor], Iterable[tuple]]


def _items(params: Params) -> list:
    if isinstance(params, Mapping):
        return list(params.items())
    return list(params)


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def arrays(self) -> dict:
        """Flat name -> array view of the moment estimates (for checkpoints)."""
        out = {f"m.{k}": a for k, a in self.m.items()}
        out.update({f"v.{k}": a for k, a in self.v.items()})
        return out

    def load_arrays(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.m = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("m.")}
        self.v = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("v.")}


def zero_grads(params: Params) -> None:
    for _, p in _items(params):
        p.zero_grad()


def global_grad_norm(params: Params) -> float:
    total = 0.0
    for name, p in _items(params):
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_grad_norm(params: Params, max_norm: float = 1.0) -> float:
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm measured before clipping.
    """
    items = _items(params)
    norm = global_grad_norm(items)
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for _, p in items:
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(scale)
    return norm


def adam_step(params: Params, state: AdamState) -> None:
    """Bias-corrected Adam update; gradients are zeroed afterwards."""
    items = _items(params)
    for name, p in items:
        if p.grad is None:
            raise UninitializedGradientError(f"parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in items:
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype, copy=False)
        p.grad = np.zeros_like(p.data)
