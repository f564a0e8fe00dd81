"""Adversarial load-forecast injection and its impact on unit commitment and dispatch."""

__version__ = "0.3.0"
