"""The Q-network: embedding + learned positions, encoder blocks, linear Q head."""
from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np

from ..tensor_core import Tensor, default_dtype, embedding_lookup, relu
from .config import ConfigError, EncoderConfig
from .layers import CausalSelfAttention, FeedForward, LayerNorm, Linear, Module, param
from .recurrent import RecurrentSublayer


class ObservationEmbedding(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        if cfg.obs_vocab is None:
            self.table = None
            self.proj = Linear(cfg.obs_width, cfg.embed_dim, rng, dtype)
        else:
            self.table = param(rng.normal(0.0, 1.0, size=(cfg.obs_vocab, cfg.embed_per_obs_dim)).astype(dtype))
            self.proj = Linear(cfg.obs_width * cfg.embed_per_obs_dim, cfg.embed_dim, rng, dtype)

    def __call__(self, obs: Tensor) -> Tensor:
        if self.table is None:
            return self.proj(obs)
        ids = obs.data.astype(np.int64)
        looked = embedding_lookup(self.table, ids)  # (B, T, W, e)
        b, t, w, e = looked.shape
        return self.proj(looked.reshape(b, t, w * e))


class EncoderBlock(Module):
    """Post-norm block: x -> LN(x + relu(attn(x))) -> LN(. + relu(sublayer(.)))."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        d = cfg.embed_dim
        self.attn = CausalSelfAttention(d, cfg.heads, rng, dtype)
        self.ln1 = LayerNorm(d, cfg.ln_eps, dtype)
        if cfg.recurrent:
            self.sublayer = RecurrentSublayer(cfg.cell, d, cfg.recurrent_hidden, cfg.bidirectional, rng, dtype)
        else:
            self.sublayer = FeedForward(d, cfg.ffn_expansion, cfg.ffn_layers, rng, dtype)
        self.ln2 = LayerNorm(d, cfg.ln_eps, dtype)

    def __call__(self, x: Tensor, lengths: Optional[np.ndarray] = None) -> Tensor:
        l1 = self.ln1(x + relu(self.attn(x)))
        return self.ln2(l1 + relu(self.sublayer(l1, lengths)))


class QHead(Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32):
        self.hidden = Linear(cfg.embed_dim, cfg.embed_dim, rng, dtype) if cfg.head_hidden else None
        self.out = Linear(cfg.embed_dim, cfg.action_count, rng, dtype)

    def __call__(self, y: Tensor) -> Tensor:
        if self.hidden is not None:
            y = relu(self.hidden(y))
        return self.out(y)


class QNetwork(Module):
    """Maps an observation history (B, T, obs_width), T <= K, to per-timestep Q-values (B, T, A).

    Rows at positions >= valid_len are padding; outputs at valid positions never
    depend on them.
    """

    def __init__(self, cfg: EncoderConfig, seed: int | np.random.Generator = 0, dtype=None):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        dtype = default_dtype() if dtype is None else dtype
        self._cfg = cfg
        self._dtype = np.dtype(dtype)
        self.embed = ObservationEmbedding(cfg, rng, dtype)
        self.pos = param(rng.normal(0.0, 0.02, size=(cfg.context_length, cfg.embed_dim)).astype(dtype))
        self.block = [EncoderBlock(cfg, rng, dtype) for _ in range(cfg.layers)]
        self.head = QHead(cfg, rng, dtype)

    @property
    def config(self) -> EncoderConfig:
        return self._cfg

    @property
    def dtype(self) -> np.dtype:
        return self._dtype

    def embed_history(self, obs: Tensor) -> Tensor:
        steps = obs.shape[1]
        return self.embed(obs) + self.pos[:steps]

    def __call__(self, obs, valid_len=None) -> Tensor:
        return q_forward(obs, valid_len, self)

    # parameter utilities --------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise ConfigError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ConfigError(f"{name}: shape {arr.shape} does not match {p.shape}")
            p.data[...] = arr

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.ascontiguousarray(p.data).tobytes())
        return h.hexdigest()

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())


def _prepare(obs, valid_len, net: QNetwork):
    cfg = net.config
    data = obs.data if isinstance(obs, Tensor) else np.asarray(obs)
    single = data.ndim == 2
    if single:
        data = data[None]
    if data.ndim != 3 or data.shape[-1] != cfg.obs_width:
        raise ConfigError(f"observation window shape {data.shape} does not match obs_width {cfg.obs_width}")
    bsz, steps, _ = data.shape
    if steps > cfg.context_length:
        raise ConfigError(f"window length {steps} exceeds context length {cfg.context_length}")
    if valid_len is None:
        lengths = np.full(bsz, steps, dtype=np.int64)
    else:
        lengths = np.asarray(valid_len, dtype=np.int64).reshape(-1)
        if lengths.size == 1 and bsz > 1:
            lengths = np.full(bsz, int(lengths[0]), dtype=np.int64)
        if lengths.min() < 1 or lengths.max() > steps:
            raise ConfigError(f"valid_len must lie in 1..{steps}, got {lengths}")
    if isinstance(obs, Tensor) and obs.dtype == net.dtype and not single:
        x = obs
    else:
        x = Tensor(data.astype(net.dtype, copy=False))
    return x, lengths, single


def q_forward(obs, valid_len, net: QNetwork) -> Tensor:
    """Per-timestep Q-values; (T, A) for a single window, (B, T, A) for a batch."""
    x, lengths, single = _prepare(obs, valid_len, net)
    h = net.embed_history(x)
    for block in net.block:
        h = block(h, lengths)
    q = net.head(h)
    return q.reshape(q.shape[1:]) if single else q


def select_action(q_last) -> int:
    """Greedy action; ties go to the lowest index."""
    q = np.asarray(q_last.data if isinstance(q_last, Tensor) else q_last).reshape(-1)
    if q.size == 0:
        raise ValueError("cannot select an action from an empty Q-vector")
    return int(np.argmax(q))


# functional entry points mirroring the network's stages ---------------------


def embed_history(obs_window, valid_len: int, net: QNetwork) -> Tensor:
    x, _, single = _prepare(obs_window, valid_len, net)
    out = net.embed_history(x)
    return out.reshape(out.shape[1:]) if single else out


def causal_mhsa(x: Tensor, attn: CausalSelfAttention) -> Tensor:
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    out = attn(x)
    return out.reshape(out.shape[1:]) if single else out


def encoder_block(x: Tensor, block: EncoderBlock, valid_len=None) -> Tensor:
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    lengths = None if valid_len is None else np.atleast_1d(valid_len)
    out = block(x, lengths)
    return out.reshape(out.shape[1:]) if single else out


def ffn_sublayer(x: Tensor, ffn: FeedForward) -> Tensor:
    return ffn(x)


def recurrent_sublayer(x: Tensor, sub: RecurrentSublayer, valid_len=None) -> Tensor:
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    lengths = None if valid_len is None else np.atleast_1d(valid_len)
    out = sub(x, lengths)
    return out.reshape(out.shape[1:]) if single else out


def sync_parameters(src: QNetwork, dst: QNetwork) -> None:
    if src.config != dst.config:
        raise ConfigError("cannot copy parameters between networks with different configs")
    dst.load_state_dict(src.state_dict())
