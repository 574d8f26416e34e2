"""Robust model fitting by consensus maximization on a spiking-network simulator."""

from .engine import SnnConfig, ls_refine, run
from .errors import (
    ConfigError,
    ConfigOverflow,
    DegenerateData,
    DegenerateHomography,
    DegenerateSubset,
    DimensionError,
    InstanceFormatError,
    InsufficientPoints,
    InvalidGroundTruth,
    InvalidSeed,
    NonIntegerData,
    SpikeFitError,
    WeightOverflow,
)
from .fixedpoint import FixedPointConfig, run_fixed
from .model import (
    Dataset,
    build_lifted,
    consensus,
    inlier_mask,
    lifted_gradient,
    normalized_distance,
    residuals,
    solve_ls,
)
from .ransac import RansacConfig, ransac
from .result import FitResult, OpCounts, TraceEntry

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConfigOverflow",
    "Dataset",
    "DegenerateData",
    "DegenerateHomography",
    "DegenerateSubset",
    "DimensionError",
    "FitResult",
    "FixedPointConfig",
    "InstanceFormatError",
    "InsufficientPoints",
    "InvalidGroundTruth",
    "InvalidSeed",
    "NonIntegerData",
    "OpCounts",
    "RansacConfig",
    "SnnConfig",
    "SpikeFitError",
    "TraceEntry",
    "WeightOverflow",
    "build_lifted",
    "consensus",
    "inlier_mask",
    "lifted_gradient",
    "ls_refine",
    "normalized_distance",
    "ransac",
    "residuals",
    "run",
    "run_fixed",
    "solve_ls",
]
