"""Shared-control leader-follower teleoperation pipeline with a simulated follower arm."""

__version__ = "0.1.0"
