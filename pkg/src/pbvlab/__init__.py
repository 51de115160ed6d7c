"""Photophysics analysis toolkit for group-IV color centers in diamond.

Spectral doublet fitting, temperature laws, photon statistics,
dipole polarization geometry, the phonon-mediated transition-rate model and
a kinetic Monte Carlo emitter simulator.
"""
__version__ = "0.1.0"
