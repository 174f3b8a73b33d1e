"""Replay-based continual learning with information-theoretic generalization bounds."""

__version__ = "0.1.0"
