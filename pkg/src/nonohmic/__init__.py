"""Decay and spreading of a quantum level coupled to a non-Ohmic band.

The package bundles the closed-form spectral theory of the problem, seeded
band-matrix builders, exact and polynomial propagators, local-density-of-
states routes to the survival amplitude, wavepacket observables, and a
reproducible experiment harness with a CLI front end.
"""

from .spectral import BandProfile, Cutoff, TimeScales  # noqa: F401

__version__ = "0.1.0"
