"""Pair-conditioned top-K evidence attention for temporal relation extraction."""

__version__ = "0.1.0"
