"""Car Flag: a car on a line must visit an oracle zone to learn which end is the goal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .base import PomdpEnv

LEFT, COAST, RIGHT = 0, 1, 2


@dataclass
class CarFlagState:
    x: float
    v: float
    goal_side: int
    steps: int = 0


class CarFlag(PomdpEnv):
    """Observation ``(x, v, hint)``; hint is the goal side inside the oracle zone, else 0.

    Actions: 0 = accelerate left, 1 = coast, 2 = accelerate right. Reaching the
    goal end (|x| >= 1 on the goal side) gives +1 and success; reaching the other
    end ends the episode as a failure.
    """

    name = "carflag"
    obs_width = 3
    action_count = 3

    def __init__(
        self,
        seed: Optional[int] = None,
        accel: float = 0.01,
        v_max: float = 0.07,
        x_limit: float = 1.1,
        goal_x: float = 1.0,
        oracle_center: float = 0.0,
        oracle_half_width: float = 0.2,
        start_range: float = 0.8,
        max_episode_steps: int = 200,
    ):
        super().__init__(seed)
        self.accel = accel
        self.v_max = v_max
        self.x_limit = x_limit
        self.goal_x = goal_x
        self.oracle_center = oracle_center
        self.oracle_half_width = oracle_half_width
        self.start_range = start_range
        self.max_episode_steps = max_episode_steps
        self.state = CarFlagState(0.0, 0.0, 1)

    def hint(self, x: float) -> float:
        return float(self.state.goal_side) if abs(x - self.oracle_center) <= self.oracle_half_width else 0.0

    def observe(self) -> np.ndarray:
        s = self.state
        return np.array([s.x, s.v, self.hint(s.x)], dtype=np.float32)

    def _reset(self) -> np.ndarray:
        goal_side = 1 if self.rng.random() < 0.5 else -1
        x = float(self.rng.uniform(-self.start_range, self.start_range))
        self.state = CarFlagState(x, 0.0, goal_side)
        return self.observe()

    def _step(self, action: int):
        s = self.state
        s.v = float(np.clip(s.v + self.accel * (action - 1), -self.v_max, self.v_max))
        s.x = float(np.clip(s.x + s.v, -self.x_limit, self.x_limit))
        s.steps = self.steps
        obs = self.observe()
        if abs(s.x) >= self.goal_x:
            success = int(np.sign(s.x)) == s.goal_side
            return obs, 1.0 if success else 0.0, True, success
        return obs, 0.0, False, False

    def set_pose(self, x: float, v: float, goal_side: int) -> np.ndarray:
        """Place the car (for scripted tests); opens an episode if none is running."""
        if self.done:
            self.steps = 0
            self.done = False
        self.state = CarFlagState(float(x), float(v), int(goal_side), self.steps)
        return self.observe()


def scripted_carflag_policy():
    """Optimal-style controller with memory: head for the oracle, then for the revealed end."""
    known = {"side": 0}

    def act(obs: np.ndarray) -> int:
        x, v, hint = (float(o) for o in obs)
        if hint != 0.0:
            known["side"] = int(hint)
        target = 0.0 if known["side"] == 0 else 1.5 * known["side"]
        # bang-bang on position error, braking when about to overshoot the zone
        desired = np.clip((target - x) * 0.5, -0.07, 0.07)
        if desired > v + 1e-12:
            return RIGHT
        if desired < v - 1e-12:
            return LEFT
        return COAST

    return act
