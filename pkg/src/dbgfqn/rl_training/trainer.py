"""DQN-style optimisation over replayed observation windows."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from ..model_zoo import ConfigError, QNetwork, select_action, sync_parameters
from ..tensor_core import AdamState, Tape, Tensor, absolute, adam_step, clip_grad_norm, take_last, where
from .buffer import ReplayBuffer, TransitionSequence


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2_000_000
    target_sync_period: int = 10_000
    lr: float = 3e-4
    batch_size: int = 32
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_fraction: float = 0.1  # share of total_steps spent annealing
    warmup_steps: int = 1_000
    train_every: int = 1
    buffer_capacity: int = 500_000
    grad_clip: Optional[float] = 1.0
    loss: str = "mse"  # or "huber"
    restricted: bool = False  # train on the last valid position only
    eval_every: int = 0  # greedy evaluation cadence in steps; 0 disables
    eval_episodes: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("target_sync_period", "batch_size", "buffer_capacity", "train_every", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("total_steps", "warmup_steps", "eval_every"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.loss not in ("mse", "huber"):
            raise ConfigError(f"loss must be 'mse' or 'huber', got {self.loss!r}")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Linear anneal from eps_start to eps_end over eps_fraction of the run, then flat."""
    horizon = cfg.eps_fraction * cfg.total_steps
    if horizon <= 0 or step >= horizon:
        return cfg.eps_end
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * step / horizon


def epsilon_greedy(q_last, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    q = np.asarray(q_last.data if isinstance(q_last, Tensor) else q_last).reshape(-1)
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    return select_action(q)


def sync_target(online: QNetwork, target: QNetwork) -> None:
    sync_parameters(online, target)


def td_targets(batch: TransitionSequence, online: QNetwork, target: QNetwork, gamma: float) -> np.ndarray:
    """Per-timestep targets r_t + gamma * (1 - done_t) * max_a Q_target(next_obs)_t; zero at pads.

    ``online`` is unused by vanilla DQN targets and kept for signature symmetry
    with double-DQN style variants.
    """
    rewards = batch.rewards.astype(np.float32)
    if gamma == 0.0:
        bootstrap = np.zeros_like(rewards)
    else:
        q_next = target(batch.next_obs, batch.valid_len).data
        bootstrap = q_next.max(axis=-1)
    y = rewards + np.float32(gamma) * np.where(batch.dones, 0.0, bootstrap).astype(np.float32)
    return np.where(batch.mask, y, 0.0).astype(np.float32)


def loss_mask(batch: TransitionSequence, restricted: bool = False) -> np.ndarray:
    if not restricted:
        return batch.mask
    steps = batch.obs.shape[-2]
    return np.arange(steps) == (np.asarray(batch.valid_len)[..., None] - 1)


def td_loss(
    online: QNetwork, batch: TransitionSequence, targets: np.ndarray, kind: str = "mse", restricted: bool = False
) -> Tensor:
    """Mean TD error over the masked timesteps; must be called under a tape to train."""
    mask = loss_mask(batch, restricted)
    q = online(batch.obs, batch.valid_len)
    q_taken = take_last(q, batch.actions)
    diff = q_taken - targets
    if kind == "mse":
        per = diff * diff
    else:
        a = absolute(diff)
        quad = where(a.data <= 1.0, diff * diff * 0.5, a - 0.5)
        per = quad
    per = where(mask, per, 0.0)
    return per.sum() * (1.0 / max(int(mask.sum()), 1))


def train_step(
    online: QNetwork,
    target: QNetwork,
    buffer: ReplayBuffer,
    opt_state: AdamState,
    cfg: TrainConfig,
    rng: np.random.Generator,
    context: Optional[int] = None,
) -> float:
    context = context or online.config.context_length
    batch = buffer.sample(cfg.batch_size, context, rng).trimmed()
    targets = td_targets(batch, online, target, cfg.gamma)
    params = online.parameters()
    with Tape() as tape:
        loss = td_loss(online, batch, targets, cfg.loss, cfg.restricted)
        tape.backward(loss)
    if cfg.grad_clip is not None:
        clip_grad_norm(params, cfg.grad_clip)
    opt_state.lr = cfg.lr
    adam_step(params, opt_state)
    return float(loss.data)
