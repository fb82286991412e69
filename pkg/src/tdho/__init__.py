"""Scattering laboratory for time-decaying harmonic oscillators."""

__version__ = "0.1.0"
