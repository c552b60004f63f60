"""Simulator of polarization-entangled photon pairs under rival measurement descriptions."""

__version__ = "0.1.0"
