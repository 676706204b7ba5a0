"""facadeatlas: urban building-exterior datasets from OSM and street view."""

__version__ = "0.1.0"
