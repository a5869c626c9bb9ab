"""Parameterised building blocks: linear maps, layer norm, causal attention, FFN."""
from __future__ import annotations

import math
from typing import Iterator, Optional

import numpy as np

from ..tensor_core import Tensor, layer_norm, matmul, relu, softmax_last_dim, transpose


class Module:
    """Minimal parameter container; parameters and submodules are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())


def param(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


def uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple, dtype) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return param(rng.uniform(-bound, bound, size=shape).astype(dtype))


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, bias: bool = True):
        self.w = uniform_fan_in(rng, n_in, (n_in, n_out), dtype)
        self.b = param(np.zeros(n_out, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.w)
        return y + self.b if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.gain = param(np.ones(dim, dtype=dtype))
        self.bias = param(np.zeros(dim, dtype=dtype))
        self._eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self._eps)


def causal_mask(t: int) -> np.ndarray:
    """Boolean (t, t) mask; row i may attend to columns 0..i."""
    return np.tril(np.ones((t, t), dtype=bool))


class CausalSelfAttention(Module):
    """Multi-head scaled dot-product self-attention with a strictly causal mask."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dtype=np.float32):
        self.wq = uniform_fan_in(rng, dim, (dim, dim), dtype)
        self.bq = param(np.zeros(dim, dtype=dtype))
        self.wk = uniform_fan_in(rng, dim, (dim, dim), dtype)
        self.bk = param(np.zeros(dim, dtype=dtype))
        self.wv = uniform_fan_in(rng, dim, (dim, dim), dtype)
        self.bv = param(np.zeros(dim, dtype=dtype))
        self.wo = uniform_fan_in(rng, dim, (dim, dim), dtype)
        self.bo = param(np.zeros(dim, dtype=dtype))
        self._heads = heads
        self._dim = dim
        self.last_weights: Optional[np.ndarray] = None

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return transpose(x.reshape(b, t, self._heads, self._dim // self._heads), (0, 2, 1, 3))

    def __call__(self, x: Tensor) -> Tensor:
        b, t, d = x.shape
        q = self._split(matmul(x, self.wq) + self.bq)
        k = self._split(matmul(x, self.wk) + self.bk)
        v = self._split(matmul(x, self.wv) + self.bv)
        scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(d // self._heads))
        weights = softmax_last_dim(scores, causal_mask(t))
        self.last_weights = weights.data
        heads = matmul(weights, v)  # (b, h, t, dk)
        merged = transpose(heads, (0, 2, 1, 3)).reshape(b, t, d)
        return matmul(merged, self.wo) + self.bo


class FeedForward(Module):
    """Position-wise network: ``layers`` (linear + ReLU) stages of width expansion*D, then a linear back to D.

    With ``layers=0`` it is a single D->D linear map.
    """

    def __init__(self, dim: int, expansion: int, layers: int, rng: np.random.Generator, dtype=np.float32):
        width = expansion * dim
        if layers == 0:
            self.stages = [Linear(dim, dim, rng, dtype)]
        else:
            dims = [dim] + [width] * layers + [dim]
            self.stages = [Linear(a, b, rng, dtype) for a, b in zip(dims[:-1], dims[1:])]

    def __call__(self, x: Tensor, lengths=None) -> Tensor:
        for stage in self.stages[:-1]:
            x = relu(stage(x))
        return self.stages[-1](x)
