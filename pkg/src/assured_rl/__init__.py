"""Tabular safe RL with learned action barriers."""

__version__ = "0.1.0"
