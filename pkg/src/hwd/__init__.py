"""Hamming-weight dependency test for pseudorandom number generators."""

__version__ = "0.1.0"
