"""Workbench for a chaos-based image cipher and the attacks against it."""

__version__ = "0.1.0"
