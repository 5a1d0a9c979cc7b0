"""Rank-based interacting diffusions: finite systems, mean-field limit, waves and capital."""

from .coefficients import (
    CoefficientProfile,
    MeanFieldProfile,
    PiecewiseLinear,
    discretize_meanfield,
    make_atlas,
    smoothed_atlas_profile,
)
from .errors import RankDiffError

__version__ = "0.1.0"

__all__ = [
    "CoefficientProfile",
    "MeanFieldProfile",
    "PiecewiseLinear",
    "RankDiffError",
    "discretize_meanfield",
    "make_atlas",
    "smoothed_atlas_profile",
]
