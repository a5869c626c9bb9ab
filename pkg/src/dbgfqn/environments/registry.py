"""Named task constructors."""
from __future__ import annotations

from typing import Callable, Optional

from .base import PomdpEnv
from .carflag import CarFlag
from .gridverse import GridConfig, GridverseEnv
from .memory_cards import MemoryCards


def _grid(size: int, layout: str = "open", rooms: int = 1, beacons: int = 1, hallucinated: bool = False):
    def make(seed: Optional[int] = None, **overrides) -> GridverseEnv:
        fields = dict(size=size, layout=layout, rooms_per_side=rooms, beacon_count=beacons, hallucinated=hallucinated)
        fields.update(overrides)
        return GridverseEnv(GridConfig(**fields), seed=seed, name=name_of[make])

    return make


name_of: dict = {}

REGISTRY: dict[str, Callable[..., PomdpEnv]] = {
    "carflag": lambda seed=None, **kw: CarFlag(seed=seed, **kw),
    "memorycards": lambda seed=None, **kw: MemoryCards(seed=seed, **kw),
    "gv_memory_5x5": _grid(5),
    "gv_memory_7x7": _grid(7),
    "gv_memory_9x9": _grid(9),
    "gv_memory_11x11": _grid(11),
    "gv_memory_13x13": _grid(13),
    "gv_memory_13x13_hallucinated": _grid(13, rooms=5, hallucinated=True),
    "gv_memory_4rooms_7x7": _grid(7, "rooms", 2),
    "gv_memory_4rooms_13x13": _grid(13, "rooms", 2),
    "gv_memory_9rooms_13x13": _grid(13, "rooms", 3),
    "gv_memory_9rooms_13x13_2beacon": _grid(13, "rooms", 3, beacons=2),
    "gv_memory_9rooms_13x13_3beacon": _grid(13, "rooms", 3, beacons=3),
    "gv_memory_16rooms_13x13": _grid(13, "rooms", 4),
    "gv_memory_25rooms_13x13": _grid(13, "rooms", 5),
    "gv_memory_16rooms_15x15": _grid(15, "rooms", 4),
    "gv_memory_16rooms_17x17": _grid(17, "rooms", 4),
    "gv_memory_16rooms_21x21": _grid(21, "rooms", 4),
    "gv_keydoor_5x5": _grid(5, "keydoor"),
    "gv_keydoor_7x7": _grid(7, "keydoor"),
    "gv_keydoor_9x9": _grid(9, "keydoor"),
}
for _name, _factory in REGISTRY.items():
    name_of[_factory] = _name


def env_names() -> list[str]:
    return sorted(REGISTRY)


def make_env(name: str, seed: Optional[int] = None, **overrides) -> PomdpEnv:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; known: {', '.join(env_names())}") from None
    return factory(seed=seed, **overrides)
