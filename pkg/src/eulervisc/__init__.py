"""Staggered time integration of compressible finite-strain
visco-elastodynamics in the Eulerian frame."""

__version__ = "0.1.0"
