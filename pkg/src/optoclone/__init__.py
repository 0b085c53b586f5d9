"""Optomechanical quantum cloning: photon-phonon gates, cloning circuits and their open-system dynamics."""

__version__ = "0.1.0"
