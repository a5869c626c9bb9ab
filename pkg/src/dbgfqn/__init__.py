"""Transformer Q-networks with recurrent sublayers for partially observable RL."""

__version__ = "0.1.0"
