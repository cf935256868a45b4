"""Preference-based fair classification: envy-free group-conditional
classifiers trained with convex-concave benefit constraints."""

__version__ = "0.1.0"
