"""Continuous-variable Bell tests on photon-subtracted multimode squeezed light."""

__version__ = "0.1.0"
