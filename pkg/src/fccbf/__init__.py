"""Finite-time convergent control barrier functions with feasibility-checked parameter design."""

__version__ = "0.1.0"
