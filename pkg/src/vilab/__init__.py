"""Variational-inequality solvers, convergence criterion and FEM applications."""
