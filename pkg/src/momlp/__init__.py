"""Maximum optimality margin learning for contextual and inverse linear programs."""

__version__ = "0.1.0"
