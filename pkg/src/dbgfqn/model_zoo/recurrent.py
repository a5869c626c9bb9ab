"""Recurrent cells and the (bi-)recurrent sublayer.

Each direction owns ``w_ih`` (D x G*H), ``w_hh`` (H x G*H) and two bias vectors
``b_ih``/``b_hh`` (G*H), with G = 1 (tanh RNN), 3 (GRU: reset, update, candidate)
or 4 (LSTM: input, forget, cell, output). The GRU follows

    r = sigmoid(x W_r + h W_hr + b_r)
    z = sigmoid(x W_z + h W_hz + b_z)
    n = tanh(x W_n + (r * h) W_hn + b_n)
    h' = (1 - z) * h + z * n

where each gate bias is the sum of its input and recurrent parts.

``gru_cell``/``lstm_cell``/``rnn_cell`` are composed from tape primitives and
serve as the reference; ``scan`` is a fused whole-sequence op with a
hand-written backward pass used by the network for speed.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..tensor_core import Tensor, concat, custom_op, matmul, sigmoid, tanh
from ..tensor_core.tensor import _sigmoid
from .config import GATES_PER_CELL as GATES
from .layers import Module, param, uniform_fan_in


class CellWeights(Module):
    def __init__(self, cell: str, n_in: int, hidden: int, rng: np.random.Generator, dtype=np.float32):
        g = GATES[cell]
        self.w_ih = uniform_fan_in(rng, n_in, (n_in, g * hidden), dtype)
        self.w_hh = uniform_fan_in(rng, hidden, (hidden, g * hidden), dtype)
        self.b_ih = param(np.zeros(g * hidden, dtype=dtype))
        self.b_hh = param(np.zeros(g * hidden, dtype=dtype))
        self._cell = cell
        self._hidden = hidden

    @property
    def tensors(self) -> tuple:
        return self.w_ih, self.w_hh, self.b_ih, self.b_hh


def _as_rows(x: Tensor) -> Tensor:
    return x.reshape(1, x.shape[0]) if x.ndim == 1 else x


def gru_cell(x_t: Tensor, h_prev: Tensor, weights: CellWeights) -> Tensor:
    squeeze = x_t.ndim == 1
    x_t, h_prev = _as_rows(x_t), _as_rows(h_prev)
    hd = h_prev.shape[-1]
    gi = matmul(x_t, weights.w_ih) + weights.b_ih
    gh = matmul(h_prev, weights.w_hh[:, : 2 * hd]) + weights.b_hh[: 2 * hd]
    r = sigmoid(gi[..., :hd] + gh[..., :hd])
    z = sigmoid(gi[..., hd : 2 * hd] + gh[..., hd:])
    n = tanh(gi[..., 2 * hd :] + matmul(r * h_prev, weights.w_hh[:, 2 * hd :]) + weights.b_hh[2 * hd :])
    h = (1.0 - z) * h_prev + z * n
    return h.reshape(hd) if squeeze else h


def rnn_cell(x_t: Tensor, h_prev: Tensor, weights: CellWeights) -> Tensor:
    squeeze = x_t.ndim == 1
    x_t, h_prev = _as_rows(x_t), _as_rows(h_prev)
    h = tanh(matmul(x_t, weights.w_ih) + weights.b_ih + matmul(h_prev, weights.w_hh) + weights.b_hh)
    return h.reshape(h.shape[-1]) if squeeze else h


def lstm_cell(x_t: Tensor, state: tuple, weights: CellWeights) -> tuple:
    h_prev, c_prev = state
    squeeze = x_t.ndim == 1
    x_t, h_prev, c_prev = _as_rows(x_t), _as_rows(h_prev), _as_rows(c_prev)
    hd = h_prev.shape[-1]
    a = matmul(x_t, weights.w_ih) + weights.b_ih + matmul(h_prev, weights.w_hh) + weights.b_hh
    i = sigmoid(a[..., :hd])
    f = sigmoid(a[..., hd : 2 * hd])
    g = tanh(a[..., 2 * hd : 3 * hd])
    o = sigmoid(a[..., 3 * hd :])
    c = f * c_prev + i * g
    h = o * tanh(c)
    if squeeze:
        return h.reshape(hd), c.reshape(hd)
    return h, c


# ---------------------------------------------------------------------------
# fused sequence scan
#
# All directions of a layer run in one loop over s = 0..T-1 with stacked
# weights; direction k visits position s (forward) or T-1-s (reverse).
# Arrays carry a leading direction axis: h is (nd, B, H), w_hh is (nd, H, G*H).


def _time_major(a: np.ndarray, reverse: tuple) -> np.ndarray:
    """(B, T, nd, H) -> (T, nd, B, H) in scan order (reverse directions flipped)."""
    out = np.ascontiguousarray(a.transpose(1, 2, 0, 3))
    for k, rev in enumerate(reverse):
        if rev:
            out[:, k] = out[::-1, k]
    return out


def _batch_major(a: np.ndarray, reverse: tuple) -> np.ndarray:
    """Inverse of :func:`_time_major`."""
    a = a.copy()
    for k, rev in enumerate(reverse):
        if rev:
            a[:, k] = a[::-1, k]
    return a.transpose(2, 0, 1, 3)


def _activity(steps: int, lengths: np.ndarray, reverse: tuple) -> np.ndarray:
    """(T, nd, B, 1) mask: is the position visited at scan step s a valid one."""
    s = np.arange(steps)
    pos = np.stack([steps - 1 - s if rev else s for rev in reverse], axis=1)  # (T, nd)
    return (pos[:, :, None] < lengths[None, None, :])[..., None]


def _scan_forward(cell, x, w_ih, w_hh, b_ih, b_hh, lengths, reverse):
    nd = len(reverse)
    bsz, steps, _ = x.shape
    hd = w_hh.shape[1]
    dtype = x.dtype
    # input projections for all steps at once, recurrent biases folded in
    gi = np.matmul(x[None], w_ih[:, None]) + (b_ih + b_hh)[:, None, None]  # (nd, B, T, GH)
    gi = _time_major(gi.transpose(1, 2, 0, 3), reverse)  # (T, nd, B, GH)
    active = _activity(steps, lengths, reverse)
    h = np.zeros((nd, bsz, hd), dtype=dtype)
    c = np.zeros((nd, bsz, hd), dtype=dtype)
    emitted = np.zeros((steps, nd, bsz, hd), dtype=dtype)
    caches = []
    if cell == "gru":
        w_rz = np.ascontiguousarray(w_hh[..., : 2 * hd])
        w_n = np.ascontiguousarray(w_hh[..., 2 * hd :])
    for s in range(steps):
        act = active[s]
        g_s = gi[s]
        if cell == "gru":
            rz = _sigmoid(g_s[..., : 2 * hd] + np.matmul(h, w_rz))
            r, z = rz[..., :hd], rz[..., hd:]
            rh = r * h
            n = np.tanh(g_s[..., 2 * hd :] + np.matmul(rh, w_n))
            h_new = h + z * (n - h)
            caches.append((h, r, z, n, rh))
        elif cell == "rnn":
            h_new = np.tanh(g_s + np.matmul(h, w_hh))
            caches.append((h, h_new))
        else:
            a = g_s + np.matmul(h, w_hh)
            ifo = _sigmoid(a[..., np.r_[0 : 2 * hd, 3 * hd : 4 * hd]])
            i, f, o = ifo[..., :hd], ifo[..., hd : 2 * hd], ifo[..., 2 * hd :]
            g = np.tanh(a[..., 2 * hd : 3 * hd])
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            caches.append((h, c, i, f, g, o, tc))
            c = np.where(act, c_new, c)
        np.multiply(h_new, act, out=emitted[s])
        h = np.where(act, h_new, h)
    out = _batch_major(emitted, reverse)  # (B, T, nd, H)
    return out.reshape(bsz, steps, nd * hd), (caches, active)


def _scan_backward(cell, grad_out, x, w_ih, w_hh, saved, reverse):
    caches, active = saved
    nd = len(reverse)
    bsz, steps, n_in = x.shape
    hd = w_hh.shape[1]
    dtype = x.dtype
    g_time = _time_major(grad_out.reshape(bsz, steps, nd, hd), reverse)  # (T, nd, B, H)
    g_time *= active
    w_hh_t = np.ascontiguousarray(np.swapaxes(w_hh, -1, -2))
    dgi = np.zeros((steps, nd, bsz, w_hh.shape[2]), dtype=dtype)
    dw_hh = np.zeros_like(w_hh)
    dh = np.zeros((nd, bsz, hd), dtype=dtype)
    dc = np.zeros((nd, bsz, hd), dtype=dtype)
    for s in range(steps - 1, -1, -1):
        act = active[s]
        dh_tot = dh + g_time[s]
        g = dh_tot * act
        if cell == "gru":
            h_prev, r, z, n, rh = caches[s]
            dan = g * z * (1.0 - n * n)
            drh = np.matmul(dan, w_hh_t[:, 2 * hd :])
            da_rz = np.concatenate([drh * h_prev * r * (1.0 - r), g * (n - h_prev) * z * (1.0 - z)], axis=-1)
            dhp = g * (1.0 - z) + drh * r + np.matmul(da_rz, w_hh_t[:, : 2 * hd])
            da = np.concatenate([da_rz, dan], axis=-1)
        elif cell == "rnn":
            h_prev, h_new = caches[s]
            da = g * (1.0 - h_new * h_new)
            dhp = np.matmul(da, w_hh_t)
        else:
            h_prev, c_prev, i, f, gg, o, tc = caches[s]
            dc_tot = dc + g * o * (1.0 - tc * tc)
            da = np.concatenate(
                [
                    dc_tot * gg * i * (1.0 - i),
                    dc_tot * c_prev * f * (1.0 - f),
                    dc_tot * i * (1.0 - gg * gg),
                    g * tc * o * (1.0 - o),
                ],
                axis=-1,
            )
            da *= act
            dhp = np.matmul(da, w_hh_t)
            dc = np.where(act, dc_tot * f, dc)
        dgi[s] = da
        dh = np.where(act, dhp, dh_tot)
    # recurrent weight gradients in one contraction over (time, batch)
    h_prevs = np.stack([cache[0] for cache in caches])  # (T, nd, B, H)
    if cell == "gru":
        rhs = np.stack([cache[4] for cache in caches])
        dw_hh[..., : 2 * hd] = _contract(h_prevs, dgi[..., : 2 * hd])
        dw_hh[..., 2 * hd :] = _contract(rhs, dgi[..., 2 * hd :])
    else:
        dw_hh[...] = _contract(h_prevs, dgi)
    db_hh = dgi.sum(axis=(0, 2))
    db_ih = db_hh.copy()
    dgi = _batch_major(dgi, reverse).transpose(2, 0, 1, 3)  # (nd, B, T, GH)
    dx = np.matmul(dgi, np.swapaxes(w_ih, -1, -2)[:, None]).sum(axis=0)
    flat_x = x.reshape(-1, n_in)
    dw_ih = np.stack([flat_x.T @ dgi[k].reshape(-1, dgi.shape[-1]) for k in range(nd)])
    return dx.astype(dtype, copy=False), dw_ih, dw_hh, db_ih, db_hh


def _contract(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum over (T, B) of a^T b for (T, nd, B, m) x (T, nd, B, n) -> (nd, m, n)."""
    a2 = a.transpose(1, 0, 2, 3).reshape(a.shape[1], -1, a.shape[3])
    b2 = b.transpose(1, 0, 2, 3).reshape(b.shape[1], -1, b.shape[3])
    return np.matmul(np.swapaxes(a2, 1, 2), b2)


def scan_directions(
    cell: str,
    x: Tensor,
    directions: Sequence[CellWeights],
    lengths: Optional[np.ndarray] = None,
    reverse: Sequence[bool] = (False,),
) -> Tensor:
    """Run one recurrent cell per direction over ``x`` (B, T, D) from zero states.

    Only positions ``t < lengths[b]`` are processed; a reverse direction starts at
    the last valid position. Outputs of all directions are concatenated on the
    last axis, (B, T, nd*H); padded positions are zero.
    """
    bsz, steps, _ = x.shape
    lengths = np.full(bsz, steps) if lengths is None else np.asarray(lengths).reshape(bsz)
    reverse = tuple(bool(r) for r in reverse)
    if len(reverse) != len(directions):
        raise ValueError("need one reverse flag per direction")
    leaves = [w for d in directions for w in d.tensors]
    w_ih = np.stack([d.w_ih.data for d in directions])
    w_hh = np.stack([d.w_hh.data for d in directions])
    b_ih = np.stack([d.b_ih.data for d in directions])
    b_hh = np.stack([d.b_hh.data for d in directions])
    out, caches = _scan_forward(cell, x.data, w_ih, w_hh, b_ih, b_hh, lengths, reverse)
    xd = x.data

    def back(g):
        dx, dw_ih, dw_hh, db_ih, db_hh = _scan_backward(cell, g, xd, w_ih, w_hh, caches, reverse)
        grads = [dx]
        for k in range(len(directions)):
            grads += [dw_ih[k], dw_hh[k], db_ih[k], db_hh[k]]
        return tuple(grads)

    return custom_op((x, *leaves), out, back)


def scan(
    cell: str,
    x: Tensor,
    weights: CellWeights,
    lengths: Optional[np.ndarray] = None,
    reverse: bool = False,
) -> Tensor:
    """Single-direction :func:`scan_directions`."""
    return scan_directions(cell, x, [weights], lengths, (reverse,))


class RecurrentSublayer(Module):
    """Uni- or bi-directional single-layer recurrence over the valid span of each sequence."""

    def __init__(self, cell: str, n_in: int, hidden: int, bidirectional: bool, rng, dtype=np.float32):
        self.fwd = CellWeights(cell, n_in, hidden, rng, dtype)
        self.bwd = CellWeights(cell, n_in, hidden, rng, dtype) if bidirectional else None
        self._cell = cell

    def __call__(self, x: Tensor, lengths=None) -> Tensor:
        if self.bwd is None:
            return scan_directions(self._cell, x, [self.fwd], lengths, (False,))
        return scan_directions(self._cell, x, [self.fwd, self.bwd], lengths, (False, True))


def reference_recurrence(cell: str, x: Tensor, sub: RecurrentSublayer, valid_len: int) -> Tensor:
    """Step-by-step recurrence for one sequence (T, D) built from the single-step cells.

    Independent of ``scan``; used to cross-check it.
    """
    steps = x.shape[0]
    hd = sub.fwd.w_hh.shape[0]
    dtype = x.dtype

    def run(weights, order):
        h = Tensor(np.zeros(hd, dtype=dtype))
        c = Tensor(np.zeros(hd, dtype=dtype))
        outs = {}
        for t in order:
            if cell == "gru":
                h = gru_cell(x[t], h, weights)
            elif cell == "rnn":
                h = rnn_cell(x[t], h, weights)
            else:
                h, c = lstm_cell(x[t], (h, c), weights)
            outs[t] = h
        zero = Tensor(np.zeros(hd, dtype=dtype))
        return [outs.get(t, zero).reshape(1, hd) for t in range(steps)]

    fwd = concat(run(sub.fwd, range(valid_len)), axis=0)
    if sub.bwd is None:
        return fwd
    bwd = concat(run(sub.bwd, range(valid_len - 1, -1, -1)), axis=0)
    return concat([fwd, bwd], axis=-1)
