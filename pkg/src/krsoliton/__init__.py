"""Numerical laboratory for the U(n)-invariant expanding Kahler-Ricci soliton on C^n
and the stability of its radial perturbations under the flow."""

__version__ = "0.1.0"
