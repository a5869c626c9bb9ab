"""Replay, exploration and TD optimisation for the Q-networks."""
from .buffer import EmptyBufferError, ReplayBuffer, TransitionSequence, record_step, sample_batch
from .trainer import (
    TrainConfig,
    epsilon_at,
    epsilon_greedy,
    loss_mask,
    sync_target,
    td_loss,
    td_targets,
    train_step,
)

__all__ = [
    "EmptyBufferError",
    "ReplayBuffer",
    "TrainConfig",
    "TransitionSequence",
    "epsilon_at",
    "epsilon_greedy",
    "loss_mask",
    "record_step",
    "sample_batch",
    "sync_target",
    "td_loss",
    "td_targets",
    "train_step",
]
