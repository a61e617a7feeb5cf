"""Transmission policies for an energy-harvesting device with a lossy battery."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
