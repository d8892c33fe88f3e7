"""Wheel-to-vehicle association: mixture priors, graph network, baseline, data."""

__version__ = "0.1.0"
