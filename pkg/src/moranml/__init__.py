"""Moran eigenvector vs. coordinate spatial features for machine learning, with GeoShapley."""

__version__ = "0.1.0"
