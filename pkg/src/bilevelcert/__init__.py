"""Verification toolkit for nonsmooth multiobjective fractional bilevel programs."""

__version__ = "0.1.0"
