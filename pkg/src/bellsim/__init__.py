"""Seeded simulation and audit of spin-singlet correlation experiments."""

__version__ = "0.1.0"
