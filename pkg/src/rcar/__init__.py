"""Random-coefficient AR(1) simulation, regeneration and nonparametric estimation."""

__version__ = "0.1.0"
