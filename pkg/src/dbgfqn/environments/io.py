"""Plain-text layout dumps and CSV trajectory logs."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Sequence

from .gridverse import (
    BEACON_A,
    DOOR,
    EMPTY,
    FLAG_A,
    GOAL,
    KEY,
    WALL,
    GridConfig,
    GridState,
)

_AGENT = "^>v<"
_CELL = {EMPTY: ".", WALL: "#", KEY: "k", DOOR: "D", GOAL: "G"}
for _i, _ch in enumerate("abc"):
    _CELL[BEACON_A + _i] = _ch
    _CELL[FLAG_A + _i] = _ch.upper()


def render_layout(state: GridState) -> str:
    rows = []
    for r, line in enumerate(state.cells):
        chars = []
        for c, code in enumerate(line):
            if (r, c) == tuple(state.agent):
                chars.append(_AGENT[state.heading])
            elif code == EMPTY and state.soft_walls[r, c]:
                chars.append("+")  # passable hallucinated wall
            else:
                chars.append(_CELL[int(code)])
        rows.append("".join(chars))
    return "\n".join(rows)


def dump_layout(state: GridState, cfg: GridConfig, seed) -> str:
    """One JSON header line (seed, config, target colour) followed by the grid."""
    header = {"seed": seed, "config": asdict(cfg), "target_color": "AB"[state.target_color]}
    return json.dumps(header, sort_keys=True) + "\n" + render_layout(state) + "\n"


def parse_layout(text: str) -> tuple[dict, list[str]]:
    header, *rows = text.rstrip("\n").split("\n")
    return json.loads(header), rows


TRAJECTORY_FIELDS = ("step", "state", "action", "reward")


def write_trajectory(path, rows: Iterable[Sequence]) -> None:
    """CSV with columns step, state, action, reward; ``state`` is any printable pose."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_FIELDS)
        for row in rows:
            writer.writerow(row)
