"""Desk-scale teach-and-repeat mobile manipulation stack."""

__version__ = "0.1.0"
