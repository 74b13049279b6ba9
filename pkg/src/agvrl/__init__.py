"""Mapless AGV exploration with off-policy actor-critic agents."""

__version__ = "0.1.0"
