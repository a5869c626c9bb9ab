"""Memory Cards: one card is revealed per step; guess where its partner lies."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .base import PomdpEnv


@dataclass
class MemoryCardsState:
    values: np.ndarray  # value of the card at each of the 2P positions
    revealed: int  # position shown in the current observation
    solved: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))  # per position

    def partner(self, pos: int) -> int:
        same = np.flatnonzero(self.values == self.values[pos])
        return int(same[same != pos][0])


class MemoryCards(PomdpEnv):
    """P pairs on 2P positions; observation one-hot(position, 2P) + one-hot(value, P).

    A correct partner guess scores +1 and retires the pair, a wrong one -1.
    Solving every pair is a success; running out of steps is a failure.
    """

    name = "memorycards"

    def __init__(self, seed: Optional[int] = None, pairs: int = 5, max_episode_steps: int = 50):
        super().__init__(seed)
        if pairs < 1:
            raise ValueError("need at least one pair")
        self.pairs = pairs
        self.obs_width = 3 * pairs
        self.action_count = 2 * pairs
        self.max_episode_steps = max_episode_steps
        self.state: Optional[MemoryCardsState] = None

    def observe(self) -> np.ndarray:
        s = self.state
        obs = np.zeros(self.obs_width, dtype=np.float32)
        obs[s.revealed] = 1.0
        obs[2 * self.pairs + s.values[s.revealed]] = 1.0
        return obs

    def _reveal(self) -> None:
        open_positions = np.flatnonzero(~self.state.solved)
        self.state.revealed = int(self.rng.choice(open_positions))

    def _reset(self) -> np.ndarray:
        values = self.rng.permutation(np.repeat(np.arange(self.pairs), 2))
        self.state = MemoryCardsState(values, 0, np.zeros(2 * self.pairs, dtype=bool))
        self._reveal()
        return self.observe()

    def _step(self, action: int):
        s = self.state
        if action == s.partner(s.revealed):
            s.solved[[s.revealed, action]] = True
            reward = 1.0
        else:
            reward = -1.0
        if s.solved.all():
            return self.observe(), reward, True, True
        self._reveal()
        return self.observe(), reward, False, False

    def oracle_policy(self):
        """Policy with perfect knowledge of the layout (reads the hidden state)."""
        env = self

        def act(obs: np.ndarray) -> int:
            return env.state.partner(int(np.argmax(obs[: 2 * env.pairs])))

        return act


def random_success_probability(pairs: int, max_steps: int) -> float:
    """Exact success rate of a uniformly random guesser.

    Every guess hits the single partner position with probability 1/(2P),
    independently of the past, so success means at least P hits in T trials.
    """
    p = 1.0 / (2 * pairs)
    return float(sum(comb(max_steps, k) * p**k * (1 - p) ** (max_steps - k) for k in range(pairs, max_steps + 1)))
