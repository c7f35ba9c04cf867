"""Desk-scale laboratory for learned cardinality estimation over select-project-join queries."""

__version__ = "0.1.0"
