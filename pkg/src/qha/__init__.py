"""One-dimensional quantum hydrodynamics: wave functions, trajectories and stochastic ensembles."""

__version__ = "0.1.0"
