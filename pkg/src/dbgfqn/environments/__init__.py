"""Partially observable tasks behind one episodic interface."""
from .base import EpisodeDone, PomdpEnv, StepResult
from .carflag import CarFlag, CarFlagState, scripted_carflag_policy
from .gridverse import (
    ACTION_NAMES,
    CHANNELS,
    FORWARD,
    OBS_WIDTH,
    TURN_LEFT,
    TURN_RIGHT,
    GridConfig,
    GridConfigError,
    GridState,
    GridverseEnv,
    generate_layout,
    hallucinate_rooms,
    layout_is_solvable,
    move,
    observe,
    reachable,
    room_spans,
    room_walls,
    shortest_success_length,
)
from .io import dump_layout, parse_layout, render_layout, write_trajectory
from .memory_cards import MemoryCards, MemoryCardsState, random_success_probability
from .registry import REGISTRY, env_names, make_env

# functional aliases for the per-task step functions
grid_observe = observe


def grid_step(env: GridverseEnv, action: int) -> StepResult:
    return env.step(action)


def carflag_step(env: CarFlag, action: int) -> StepResult:
    return env.step(action)


def memcards_step(env: MemoryCards, action: int) -> StepResult:
    return env.step(action)


def reset(env: PomdpEnv, seed=None):
    return env.reset(seed)
