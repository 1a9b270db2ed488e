"""Stochastic bouncing-ball calibration from impact sound, and ball tracking on top of it."""

__version__ = "0.1.0"
