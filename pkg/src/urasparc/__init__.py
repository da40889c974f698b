"""Concatenated SPARC / tree-code unsourced random access laboratory."""

__version__ = "0.1.0"
