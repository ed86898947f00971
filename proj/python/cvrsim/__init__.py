"""Quasi-static CVR time-series simulation of PV-rich radial feeders."""

from ._cvrsim import *  # noqa: F401,F403
from ._cvrsim import __version__  # noqa: F401
