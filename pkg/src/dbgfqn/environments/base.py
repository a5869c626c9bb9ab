"""Episodic POMDP interface shared by every task."""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np


class EpisodeDone(RuntimeError):
    """Raised when ``step`` is called on a finished episode."""


class StepResult(NamedTuple):
    obs: np.ndarray
    reward: float
    done: bool
    success: bool


class PomdpEnv:
    """Base class: fixed observation width, discrete actions, binary success.

    Subclasses implement ``_reset()`` (draw a fresh episode from ``self.rng``
    and return the first observation) and ``_step(action)``. The base class
    owns the step counter, the timeout and the step-after-done check.
    """

    obs_width: int
    action_count: int
    max_episode_steps: int
    name = "env"

    def __init__(self, seed: Optional[int] = None):
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.done = True

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Start an episode; a seed re-seeds the environment's generator first."""
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.done = False
        obs = self._reset()
        return self._check(obs)

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeDone(f"{self.name}: step() called after the episode ended; call reset()")
        action = int(action)
        if not 0 <= action < self.action_count:
            raise ValueError(f"{self.name}: action {action} outside 0..{self.action_count - 1}")
        self.steps += 1
        obs, reward, done, success = self._step(action)
        if not done and self.steps >= self.max_episode_steps:
            done, success = True, False
        self.done = done
        return StepResult(self._check(obs), float(reward), bool(done), bool(success))

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float32).reshape(-1)
        if obs.size != self.obs_width:  # pragma: no cover - guards subclass bugs
            raise AssertionError(f"{self.name}: observation width {obs.size} != {self.obs_width}")
        return obs

    def _reset(self) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _step(self, action: int):  # pragma: no cover - abstract
        raise NotImplementedError

    # state snapshots for checkpoints and golden tests --------------------
    def get_state(self) -> dict:
        return {k: v for k, v in vars(self).items()}

    def set_state(self, state: dict) -> None:
        vars(self).update(state)
