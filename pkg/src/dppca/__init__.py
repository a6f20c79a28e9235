"""Differentially private principal components analysis.

Input perturbation (MOD-SULQ), the exponential mechanism over the matrix
Bingham distribution (PPCA), sample-complexity calculators and a seeded
experiment harness.
"""

__version__ = "0.1.0"
