"""Escape and survival statistics for open Markov interval maps."""

__version__ = "0.1.0"
