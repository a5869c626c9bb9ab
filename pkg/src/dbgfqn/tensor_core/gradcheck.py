"""Central finite-difference gradient verification."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import ContractError, Tape, Tensor


def numeric_grad(f: Callable[[], Tensor], t: Tensor, step: float = 1e-5) -> np.ndarray:
    wide = np.result_type(t.data.dtype, np.float64)
    grad = np.zeros_like(t.data, dtype=wide)
    flat = t.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f().data.reshape(()).astype(wide)
        flat[i] = orig - step
        down = f().data.reshape(()).astype(wide)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * wide.type(step))
    return grad


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` is called as ``f(*inputs)`` and must return a single-element tensor.
    Inputs are perturbed in place, so they should be created under
    ``wide_precision()`` for a meaningful comparison. The error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f(*inputs)
        if out.data.size != 1:
            raise ContractError(f"grad_check needs a scalar-valued function, got shape {out.shape}")
        tape.backward(out)
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        numeric = numeric_grad(lambda: f(*inputs), t, step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        err = np.abs(analytic - numeric) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
