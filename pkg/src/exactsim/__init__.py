"""Exact and epsilon-strong simulation of diffusion and jump-diffusion paths."""

__version__ = "0.1.0"
