"""Episode-aware sequence replay buffer.

Steps are kept in flat ring arrays indexed by a monotonically increasing global
step number ``g`` (slot ``g % capacity``). Each episode is remembered as the
range of global steps it covers, so windows can be cut without ever crossing an
episode boundary. Windows are right-padded: rows ``>= valid_len`` are zero.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np


class EmptyBufferError(RuntimeError):
    pass


@dataclass
class TransitionSequence:
    """K consecutive steps of one episode.

    Arrays carry an optional leading batch axis; ``valid_len`` is then a vector.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    next_obs: np.ndarray
    valid_len: np.ndarray

    def __len__(self) -> int:
        return 1 if self.obs.ndim == 2 else self.obs.shape[0]

    def __getitem__(self, i: int) -> "TransitionSequence":
        if self.obs.ndim == 2:
            raise TypeError("not a batch")
        return TransitionSequence(
            self.obs[i], self.actions[i], self.rewards[i], self.dones[i], self.next_obs[i], int(self.valid_len[i])
        )

    @property
    def mask(self) -> np.ndarray:
        """Boolean validity mask over the time axis."""
        steps = self.obs.shape[-2]
        return np.arange(steps) < np.asarray(self.valid_len)[..., None]

    def trimmed(self) -> "TransitionSequence":
        """Drop trailing time steps that are padding in every row."""
        t = int(np.max(self.valid_len))
        return TransitionSequence(
            self.obs[..., :t, :], self.actions[..., :t], self.rewards[..., :t],
            self.dones[..., :t], self.next_obs[..., :t, :], self.valid_len,
        )


class ReplayBuffer:
    def __init__(self, obs_width: int, capacity: int = 500_000, dtype=np.float32):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_width = obs_width
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_width), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_width), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=np.float32)
        self.dones = np.zeros(capacity, dtype=bool)
        self.total = 0  # global steps ever recorded
        self.episodes: "OrderedDict[int, list]" = OrderedDict()  # id -> [first g, last g]
        self._episode_id = 0
        self._open = False
        self._pending_next = False

    def __len__(self) -> int:
        return min(self.total, self.capacity)

    @property
    def oldest(self) -> int:
        return max(0, self.total - self.capacity)

    def record(self, obs, action: int, reward: float, done: bool, next_obs=None) -> None:
        obs = np.asarray(obs).reshape(-1)
        if obs.size != self.obs_width:
            raise ValueError(f"observation width {obs.size} does not match buffer obs_width {self.obs_width}")
        g = self.total
        if self._open and self._pending_next:
            # previous step of this episode was recorded without its successor
            self.next_obs[(g - 1) % self.capacity] = obs
        if not self._open:
            self.episodes[self._episode_id] = [g, g]
            self._open = True
        self.episodes[self._episode_id][1] = g
        slot = g % self.capacity
        self.obs[slot] = obs
        self.actions[slot] = action
        self.rewards[slot] = reward
        self.dones[slot] = done
        self._pending_next = next_obs is None
        self.next_obs[slot] = 0.0 if next_obs is None else np.asarray(next_obs).reshape(-1)
        self.total += 1
        if done:
            self.end_episode()
        self._evict()

    def end_episode(self) -> None:
        """Close the open episode (e.g. on a timeout the caller handles itself)."""
        if self._open:
            self._open = False
            self._pending_next = False
            self._episode_id += 1

    def _evict(self) -> None:
        oldest = self.oldest
        while self.episodes:
            first_id = next(iter(self.episodes))
            if self.episodes[first_id][1] >= oldest:
                break
            del self.episodes[first_id]

    def episode_spans(self) -> list[tuple[int, int]]:
        """Retained (first, last) global steps of every episode, oldest first."""
        oldest = self.oldest
        return [(max(first, oldest), last) for first, last in self.episodes.values()]

    def window(self, end: int, first: int, context: int) -> TransitionSequence:
        """The right-padded window of at most ``context`` steps ending at global step ``end``."""
        start = max(first, end - context + 1)
        n = end - start + 1
        slots = np.arange(start, end + 1) % self.capacity
        obs = np.zeros((context, self.obs_width), dtype=self.obs.dtype)
        next_obs = np.zeros_like(obs)
        actions = np.zeros(context, dtype=np.int64)
        rewards = np.zeros(context, dtype=np.float32)
        dones = np.zeros(context, dtype=bool)
        obs[:n] = self.obs[slots]
        next_obs[:n] = self.next_obs[slots]
        actions[:n] = self.actions[slots]
        rewards[:n] = self.rewards[slots]
        dones[:n] = self.dones[slots]
        return TransitionSequence(obs, actions, rewards, dones, next_obs, n)

    def sample(self, batch_size: int, context: int, rng: np.random.Generator) -> TransitionSequence:
        """Uniform over episodes, then uniform over the window end within the episode."""
        spans = self.episode_spans()
        if not spans:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        picks = rng.integers(len(spans), size=batch_size)
        seqs = []
        for k in picks:
            first, last = spans[k]
            end = int(rng.integers(first, last + 1))
            seqs.append(self.window(end, first, context))
        return TransitionSequence(
            np.stack([s.obs for s in seqs]),
            np.stack([s.actions for s in seqs]),
            np.stack([s.rewards for s in seqs]),
            np.stack([s.dones for s in seqs]),
            np.stack([s.next_obs for s in seqs]),
            np.array([s.valid_len for s in seqs], dtype=np.int64),
        )

    # checkpoint support --------------------------------------------------
    def state(self) -> dict:
        return {
            "obs_width": self.obs_width,
            "capacity": self.capacity,
            "total": self.total,
            "episodes": list(self.episodes.items()),
            "episode_id": self._episode_id,
            "open": self._open,
            "pending_next": self._pending_next,
        }

    def arrays(self) -> dict:
        n = len(self)
        return {
            "obs": self.obs[:n], "next_obs": self.next_obs[:n], "actions": self.actions[:n],
            "rewards": self.rewards[:n], "dones": self.dones[:n],
        }

    @classmethod
    def restore(cls, state: dict, arrays: dict, dtype=np.float32) -> "ReplayBuffer":
        buf = cls(state["obs_width"], state["capacity"], dtype)
        n = len(arrays["obs"])
        for name in ("obs", "next_obs", "actions", "rewards", "dones"):
            getattr(buf, name)[:n] = arrays[name]
        buf.total = state["total"]
        buf.episodes = OrderedDict((int(k), list(v)) for k, v in state["episodes"])
        buf._episode_id = state["episode_id"]
        buf._open = state["open"]
        buf._pending_next = state["pending_next"]
        return buf


def record_step(buffer: ReplayBuffer, obs, action: int, reward: float, done: bool, next_obs=None) -> None:
    buffer.record(obs, action, reward, done, next_obs)


def sample_batch(
    buffer: ReplayBuffer, batch_size: int, context: int, rng: Optional[np.random.Generator] = None
) -> TransitionSequence:
    return buffer.sample(batch_size, context, rng if rng is not None else np.random.default_rng())
