"""Nestedness analysis of bipartite graphs built from PeeringDB snapshots."""

__version__ = "0.1.0"
