"""LBP-augmented CNN pipeline for two-class fundus image diagnosis."""

__version__ = "0.1.0"
