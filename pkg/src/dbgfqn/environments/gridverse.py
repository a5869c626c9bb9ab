"""Beacon/flag gridworlds with a 2x3 egocentric view.

Cell codes double as observation channels::

    0 empty  1 wall  2-4 beacon A/B/C  5-7 flag A/B/C  8 key  9 door  10 goal

Rooms are formed by full-height/-width internal walls with one door gap per
wall segment between neighbouring rooms. A hallucinated overlay draws the same
wall pattern into the observation only; movement ignores it.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .base import PomdpEnv

EMPTY, WALL, BEACON_A, BEACON_B, BEACON_C, FLAG_A, FLAG_B, FLAG_C, KEY, DOOR, GOAL = range(11)
CHANNELS = 11
COLORS = 3  # A, B and the distractor colour C

NORTH, EAST, SOUTH, WEST = range(4)
DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))
TURN_LEFT, TURN_RIGHT, FORWARD = range(3)
ACTION_NAMES = ("turn_left", "turn_right", "forward")

# (ahead, right) offsets of the observed cells, in observation order
WINDOW = ((1, -1), (1, 0), (1, 1), (0, -1), (0, 0), (0, 1))
OBS_WIDTH = len(WINDOW) * CHANNELS

LAYOUTS = ("open", "rooms", "keydoor")


class GridConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    size: int = 5
    layout: str = "open"
    rooms_per_side: int = 1
    beacon_count: int = 1
    hallucinated: bool = False
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.size
        if n % 2 == 0 or not 5 <= n <= 21:
            raise GridConfigError(f"size must be odd and within 5..21, got {n}")
        if self.layout not in LAYOUTS:
            raise GridConfigError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if not 1 <= self.beacon_count <= 3:
            raise GridConfigError(f"beacon_count must be 1..3, got {self.beacon_count}")
        if self.layout == "rooms" or self.hallucinated:
            r = self.rooms_per_side
            if r < 2:
                raise GridConfigError("a room layout needs rooms_per_side >= 2")
            if (n - 2) - (r - 1) < r:
                raise GridConfigError(f"{r}x{r} rooms do not fit in a {n}x{n} grid")
        if self.hallucinated and self.layout != "open":
            raise GridConfigError("hallucinated rooms overlay only the open layout")

    @property
    def max_episode_steps(self) -> int:
        return 4 * self.size * self.size


def hallucinate_rooms(cfg: GridConfig, rooms_per_side: Optional[int] = None) -> GridConfig:
    """Open layout with a visible but passable rooms wall pattern."""
    if cfg.layout != "open":
        raise GridConfigError(f"hallucinate_rooms needs an open layout, got {cfg.layout!r}")
    r = cfg.rooms_per_side if rooms_per_side is None else rooms_per_side
    return replace(cfg, hallucinated=True, rooms_per_side=r)


def room_spans(size: int, rooms: int) -> list[tuple[int, int]]:
    """Split the interior 1..size-2 into ``rooms`` near-equal spans separated by one-cell walls."""
    free = (size - 2) - (rooms - 1)
    base, extra = divmod(free, rooms)
    spans, start = [], 1
    for i in range(rooms):
        width = base + (1 if i < extra else 0)
        spans.append((start, start + width - 1))
        start += width + 1
    return spans


def room_walls(size: int, rooms: int, rng: np.random.Generator) -> np.ndarray:
    """Boolean (size, size) mask of internal room walls, one random door gap per segment."""
    spans = room_spans(size, rooms)
    walls = np.zeros((size, size), dtype=bool)
    lines = [hi + 1 for _, hi in spans[:-1]]
    for line in lines:
        walls[line, 1 : size - 1] = True
        walls[1 : size - 1, line] = True
    for line in lines:
        for lo, hi in spans:
            walls[line, int(rng.integers(lo, hi + 1))] = False  # gap between vertically adjacent rooms
            walls[int(rng.integers(lo, hi + 1)), line] = False  # gap between horizontally adjacent rooms
    return walls


@dataclass
class GridState:
    cells: np.ndarray  # (N, N) int cell codes
    soft_walls: np.ndarray  # (N, N) bool, observed as wall but passable
    agent: tuple[int, int]
    heading: int
    target_color: int = 0  # 0 = A, 1 = B
    key_held: bool = False
    steps: int = 0
    beacons: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def copy(self) -> "GridState":
        return replace(self, cells=self.cells.copy(), soft_walls=self.soft_walls.copy(),
                       beacons=list(self.beacons), flags=list(self.flags))


# ---------------------------------------------------------------------------
# layout generation


def _free_cells(cells: np.ndarray) -> list[tuple[int, int]]:
    return [tuple(map(int, rc)) for rc in np.argwhere(cells == EMPTY)]


def _beacon_colors(k: int, target: int, rng: np.random.Generator) -> list[int]:
    """Colours for k beacons whose majority among the two flag colours is ``target``."""
    if k == 1:
        return [target]
    other = 1 - target
    while True:
        colors = [int(c) for c in rng.integers(COLORS, size=k)]
        if colors.count(target) > colors.count(other):
            return colors


def reachable(cells: np.ndarray, start: tuple, passable=None) -> np.ndarray:
    """Cells reachable from ``start`` by 4-neighbour moves (breadth-first)."""
    passable = passable if passable is not None else cells != WALL
    seen = np.zeros(cells.shape, dtype=bool)
    seen[start] = True
    queue = deque([start])
    n = cells.shape[0]
    while queue:
        r, c = queue.popleft()
        for dr, dc in DELTAS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < n and 0 <= cc < n and not seen[rr, cc] and passable[rr, cc]:
                seen[rr, cc] = True
                queue.append((rr, cc))
    return seen


def layout_is_solvable(state: GridState) -> bool:
    cells = state.cells
    if GOAL in cells:  # key-door layout
        before = reachable(cells, state.agent, (cells != WALL) & (cells != DOOR))
        key = tuple(map(int, np.argwhere(cells == KEY)[0]))
        goal = tuple(map(int, np.argwhere(cells == GOAL)[0]))
        return bool(before[key]) and bool(reachable(cells, key)[goal])
    seen = reachable(cells, state.agent)
    return all(seen[p] for p in state.beacons + state.flags)


def generate_layout(cfg: GridConfig, rng: np.random.Generator) -> GridState:
    n = cfg.size
    # drawn unconditionally so open / rooms / hallucinated share the same stream
    wall_seed = int(rng.integers(2**63))
    heading = int(rng.integers(4))
    base = np.full((n, n), EMPTY, dtype=np.int8)
    base[0, :] = base[-1, :] = base[:, 0] = base[:, -1] = WALL
    soft = np.zeros((n, n), dtype=bool)
    pattern = None
    if cfg.layout == "rooms" or cfg.hallucinated:
        pattern = room_walls(n, cfg.rooms_per_side, np.random.default_rng(wall_seed))
    if cfg.hallucinated:
        soft = pattern
    if cfg.layout == "keydoor":
        return _keydoor(base, soft, heading, rng)

    target = int(rng.integers(2))
    flag_colors = [int(c) for c in rng.permutation(2)]
    beacon_colors = _beacon_colors(cfg.beacon_count, target, rng)
    for _ in range(10_000):
        cells = base.copy()
        if cfg.layout == "open":
            beacons = [(1, 1)]
            flags = [(1, n - 2), (n - 2, n - 2)]
            agent = (n - 2, 1)
            taken = set(beacons + flags + [agent])
            extra = [p for p in _free_cells(cells) if p not in taken]
            for i in rng.permutation(len(extra))[: cfg.beacon_count - 1]:
                beacons.append(extra[int(i)])
        else:
            cells[pattern] = WALL
            free = _free_cells(cells)
            picks = rng.choice(len(free), size=cfg.beacon_count + 3, replace=False)
            spots = [free[int(i)] for i in picks]
            beacons, flags, agent = spots[: cfg.beacon_count], spots[-3:-1], spots[-1]
        for pos, color in zip(beacons, beacon_colors):
            cells[pos] = BEACON_A + color
        for pos, color in zip(flags, flag_colors):
            cells[pos] = FLAG_A + color
        state = GridState(cells, soft, agent, heading, target, beacons=beacons, flags=flags)
        if layout_is_solvable(state):
            return state
    raise RuntimeError("could not place a solvable layout")  # pragma: no cover


def _keydoor(base: np.ndarray, soft: np.ndarray, heading: int, rng: np.random.Generator) -> GridState:
    n = base.shape[0]
    for _ in range(10_000):
        cells = base.copy()
        col = int(rng.integers(2, n - 2))
        cells[1 : n - 1, col] = WALL
        cells[int(rng.integers(1, n - 1)), col] = DOOR
        left = [(r, c) for r in range(1, n - 1) for c in range(1, col)]
        right = [(r, c) for r in range(1, n - 1) for c in range(col + 1, n - 1)]
        a, k = rng.choice(len(left), size=2, replace=False)
        agent, key = left[int(a)], left[int(k)]
        goal = right[int(rng.integers(len(right)))]
        cells[key] = KEY
        cells[goal] = GOAL
        state = GridState(cells, soft, agent, heading)
        if layout_is_solvable(state):
            return state
    raise RuntimeError("could not place a solvable key-door layout")  # pragma: no cover


# ---------------------------------------------------------------------------
# dynamics and observation


def observe(state: GridState) -> np.ndarray:
    cells = state.cells
    n = cells.shape[0]
    r0, c0 = state.agent
    fr, fc = DELTAS[state.heading]
    rr, rc = DELTAS[(state.heading + 1) % 4]
    obs = np.zeros((len(WINDOW), CHANNELS), dtype=np.float32)
    for i, (ahead, right) in enumerate(WINDOW):
        r = r0 + ahead * fr + right * rr
        c = c0 + ahead * fc + right * rc
        if not (0 <= r < n and 0 <= c < n):
            code = WALL
        else:
            code = int(cells[r, c])
            if code == EMPTY and state.soft_walls[r, c]:
                code = WALL
        obs[i, code] = 1.0
    return obs.reshape(-1)


def blocked(state: GridState, r: int, c: int, key_held: bool) -> bool:
    n = state.cells.shape[0]
    if not (0 <= r < n and 0 <= c < n):
        return True
    code = state.cells[r, c]
    return code == WALL or (code == DOOR and not key_held)


def move(state: GridState, pose: tuple, action: int) -> tuple:
    """Pure transition of (row, col, heading, key_held) under ``action``."""
    r, c, h, key = pose
    if action == TURN_LEFT:
        return r, c, (h - 1) % 4, key
    if action == TURN_RIGHT:
        return r, c, (h + 1) % 4, key
    dr, dc = DELTAS[h]
    nr, nc = r + dr, c + dc
    if blocked(state, nr, nc, key):
        return pose
    if state.cells[nr, nc] == KEY:
        key = True
    return nr, nc, h, key


def outcome(state: GridState, r: int, c: int) -> tuple[bool, bool]:
    """(done, success) for standing on cell (r, c)."""
    code = state.cells[r, c]
    if FLAG_A <= code <= FLAG_C:
        return True, code - FLAG_A == state.target_color
    if code == GOAL:
        return True, True
    return False, False


def shortest_success_length(state: GridState) -> Optional[int]:
    """Fewest actions from the current pose to a successful terminal cell (None if impossible)."""
    start = (*state.agent, state.heading, state.key_held)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        pose = queue.popleft()
        for a in range(3):
            nxt = move(state, pose, a)
            if nxt in dist:
                continue
            dist[nxt] = dist[pose] + 1
            done, success = outcome(state, nxt[0], nxt[1])
            if success:
                return dist[nxt]
            if not done:
                queue.append(nxt)
    return None


class GridverseEnv(PomdpEnv):
    obs_width = OBS_WIDTH
    action_count = 3

    def __init__(self, cfg: GridConfig = GridConfig(), seed: Optional[int] = None, name: str = "gridverse"):
        super().__init__(cfg.seed if seed is None else seed)
        self.cfg = cfg
        self.name = name
        self.max_episode_steps = cfg.max_episode_steps
        self.state: Optional[GridState] = None

    def _reset(self) -> np.ndarray:
        self.state = generate_layout(self.cfg, self.rng)
        return observe(self.state)

    def _step(self, action: int):
        s = self.state
        r, c, h, key = move(s, (*s.agent, s.heading, s.key_held), action)
        if key and not s.key_held:
            s.cells[r, c] = EMPTY
        s.agent, s.heading, s.key_held = (r, c), h, key
        s.steps = self.steps
        done, success = outcome(s, r, c)
        return observe(s), 1.0 if success else 0.0, done, success

    def place_agent(self, row: int, col: int, heading: int) -> np.ndarray:
        """Move the agent (for scripted tests); opens an episode if none is running."""
        if self.state is None:
            self.reset()
        if self.done:
            self.steps = 0
            self.done = False
        self.state.agent = (int(row), int(col))
        self.state.heading = int(heading)
        return observe(self.state)
