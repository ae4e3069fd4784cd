"""Asymmetric masked video generation: a heavy low-resolution planner
conditioning a light high-resolution diffusion generator."""

__version__ = "0.1.0"
