"""Smoothing splines, their reproducing kernels and equivalent-kernel diagnostics.

Submodules
----------
core
    Grids, grid functions, Sobolev-type norms, design densities, noise and sampling.
greens
    Reproducing kernels as Green's functions; the exponential-kernel machinery.
spline
    Penalized least-squares spline fits and the error decomposition.
estimators
    Kernel and exponential sums, density estimates, design discrepancies.
experiments
    Bandwidth ranges, Monte Carlo rate studies, confidence bands.
cli
    The ``splinekern`` command.
"""

from ._version import __version__
from .core import (
    ConfigurationError,
    DesignDensity,
    Grid,
    GridFunction,
    ModelConfig,
    NoiseSpec,
    RegressionSample,
    UndefinedInputError,
    UniquenessError,
    make_grid,
    sample_regression,
)
from .greens import KernelOperator, greens_operator, solve_bvp
from .spline import SplineFit, decompose, fit_spline

__all__ = [
    "__version__",
    "ConfigurationError",
    "DesignDensity",
    "Grid",
    "GridFunction",
    "KernelOperator",
    "ModelConfig",
    "NoiseSpec",
    "RegressionSample",
    "SplineFit",
    "UndefinedInputError",
    "UniquenessError",
    "decompose",
    "fit_spline",
    "greens_operator",
    "make_grid",
    "sample_regression",
    "solve_bvp",
]
