"""Spectral Galerkin simulation and verification of the stochastic LLG equation."""

__version__ = "0.1.0"
