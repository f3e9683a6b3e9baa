"""Tabular thought-MDP solvers and the learned-to-think gridworld pipeline."""

from thoughtmdp._core import *  # noqa: F401,F403
from thoughtmdp._core import __version__  # noqa: F401
