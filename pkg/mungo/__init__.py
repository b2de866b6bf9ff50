"""Typestate checking and execution for the Mungo language."""

__version__ = "0.1.0"
