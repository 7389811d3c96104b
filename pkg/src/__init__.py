"""
Central-spin magnon toolkit.

Simulation and analysis routines for an electron spin qubit coupled to a
mesoscopic nuclear ensemble through a g-factor anisotropy mediated
non-collinear hyperfine interaction.
"""

__version__ = "0.3.0"
