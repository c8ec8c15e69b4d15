"""Model-based actor-critic optimal trajectory tracking with a concurrent-learning identifier."""

__version__ = "0.1.0"
