"""Diversified sequential re-ranking.

A numpy library for re-ranking candidate lists under a joint
accuracy-diversity objective: context-aware click scoring, user interest
extraction over a clustered interaction graph, perception-weighted
similarity kernels, and greedy determinant-based selection, plus the
metrics and batch pipeline around them.
"""

__version__ = "0.1.0"
