"""Attention-guided random-walk agents for attributed-graph classification."""

__version__ = "0.1.0"
