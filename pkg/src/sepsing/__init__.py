"""Numerical engine for separating singularities of bounded analytic
functions along boundary-unimodular map systems, with bounded extension to
the polydisk."""

__version__ = "0.1.0"
