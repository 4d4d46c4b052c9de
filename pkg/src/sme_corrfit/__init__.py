"""Exact correlation functions of continuously measured quantum systems and
least-squares estimation of their parameters."""

__version__ = "0.1.0"
