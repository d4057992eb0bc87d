"""Pontryagin extremals, conservation laws, Noether symmetries, problem
transformations and Tonelli-type regularity audits for unconstrained optimal
control problems."""

__version__ = "0.1.0"
