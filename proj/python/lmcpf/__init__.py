"""Localized particle and ensemble Kalman filtering on Lorenz models."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
