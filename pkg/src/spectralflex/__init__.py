"""Singular isotropic Hoermander distributions on T^2 x M and the first
Laplace eigenvalue of quasi-Kaehler metrics deformed along them."""

from . import (discretize, eigensolve, hormander, poincare, quasikahler,
               symexpr, vectorfield)

__version__ = "0.1.0"

__all__ = ["symexpr", "vectorfield", "hormander", "quasikahler", "discretize",
           "eigensolve", "poincare"]
