"""Two-dimensional angle-of-arrival synthesis for radar target simulators."""

__version__ = "0.1.0"
