"""Continuous-time filters with optimal-transport couplings."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
