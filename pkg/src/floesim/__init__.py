"""Discrete-element sea-ice floes on a stochastic spectral ocean, with
superfloe coarse-graining, ensemble uncertainty quantification and
Lagrangian data assimilation."""
__version__ = "0.1.0"
