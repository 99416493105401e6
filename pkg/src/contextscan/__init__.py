"""Standalone context modelling: learn where objects should be, then find
where they are missing (or out of place) by combining context heat maps
with detector output."""

__version__ = "0.1.0"
