"""Survival modeling toolkit: concordance, Cox fits, discrete-time hazards,
MIL pooling, AFT models, ensembling, random-effects pooling, and slide tiling.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
