"""Shape reconstruction of 2-D scatterers with a generalized multiple
measurement vector (GMMV) model."""

__version__ = "0.1.0"
