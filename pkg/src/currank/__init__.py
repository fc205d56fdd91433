"""Curriculum-weighted training for answer re-rankers.

Difficulty heuristics on a BM25 first stage, a linear weight-decay
schedule, weighted pointwise/pairwise losses, a small trainable ranker,
and an evaluation/ablation harness.
"""

__version__ = "0.1.0"
