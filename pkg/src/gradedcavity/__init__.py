"""Graded square-lattice photonic-crystal microcavity laser toolkit.

Subpackages map onto the stages of the modelling pipeline:

* :mod:`gradedcavity.geometry` -- graded lattice, rasterization, slab effective index
* :mod:`gradedcavity.fdtd` -- 2D TE Yee solver with PML and mirror-symmetry walls
* :mod:`gradedcavity.modes` -- resonance extraction, mode volume, light cone, envelopes
* :mod:`gradedcavity.laser` -- steady-state rate equations, L-L curves, threshold
* :mod:`gradedcavity.spectra` -- Lorentzian / threshold / polarization / overlap fits
* :mod:`gradedcavity.cli` -- config-driven command line front end
"""

__version__ = "0.1.0"
