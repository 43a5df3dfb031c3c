"""Oscillometric blood pressure estimation: preprocessing, grids, model and metrics."""

from ._oscbp import *  # noqa: F401,F403
from ._oscbp import OscbpError, __doc__  # noqa: F401
