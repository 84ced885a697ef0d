"""Extremum Seeker - output-feedback extremum seeking control via monitoring functions."""

__version__ = "1.0.0"
