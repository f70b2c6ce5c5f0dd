"""qarbiter: modular reinforcement learning with a Q-learned arbiter
selecting among heterogeneous knowledge modules."""

__version__ = "0.1.0"
