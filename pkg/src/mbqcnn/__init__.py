"""Simulator and trainer for measurement-based quantum convolutional networks."""

__version__ = "0.1.0"
