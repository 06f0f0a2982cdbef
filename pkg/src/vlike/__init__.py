"""Exact construction and verification of Virasoro-like operator algebras
built from the spectrum data of a calibrated Frobenius manifold."""

__version__ = "0.1.0"
