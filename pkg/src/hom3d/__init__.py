"""Spatio-temporal momentum-difference sensing with two-photon interference."""

__version__ = "0.1.0"
