"""Compact knowledge-graph completion: pruned embedding features fed to per-group boosted trees."""

__version__ = "0.1.0"
