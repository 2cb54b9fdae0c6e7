"""Penalized least-squares splines and their continuous companions.

The estimator minimizes

    (1/n) sum_i |f(X_i) - Z_i|^2 + h^{2m} int (f^(m))^2

over grid functions, with ``f(X_i)`` obtained by local polynomial
interpolation. Everything shares the grid and penalty discretization of the
kernel module, so the noise part of a fit can be compared node-for-node with
the reproducing-kernel sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ._banded import AugmentedSystem, discrete_energy, penalty_weight, polynomial_basis
from .core import (
    MAX_ORDER,
    ConfigurationError,
    DesignDensity,
    Grid,
    GridFunction,
    RegressionFunction,
    RegressionSample,
    UniquenessError,
    evaluation_matrix,
    interpolation_degree,
    norm_wmh,
)
from .greens import KernelOperator, solve_bvp


def _check_fit_args(m: int, h: float) -> None:
    if not 1 <= m <= MAX_ORDER:
        raise ConfigurationError(f"order m must be in 1..{MAX_ORDER}, got {m}")
    if not 0.0 < h <= 1.0:
        raise ConfigurationError(f"smoothing parameter h must be in (0, 1], got {h}")


def spline_objective(f: GridFunction, x, z, m: int, h: float) -> float:
    """Discretized ``LS(f)``: mean squared residual plus ``h^{2m}`` times the energy."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    resid = f(x, interpolation_degree(m)) - z
    return float(np.mean(resid**2) + h ** (2 * m) * discrete_energy(f.values, f.grid, m))


@dataclass(frozen=True, eq=False)
class SplineFit:
    """A fitted smoothing spline together with its objective decomposition."""

    function: GridFunction
    m: int
    h: float
    x: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    objective: float
    data_term: float
    penalty: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def grid(self) -> Grid:
        return self.function.grid

    @property
    def residual_rms(self) -> float:
        return float(np.sqrt(self.data_term))

    def recompute_objective(self) -> float:
        return spline_objective(self.function, self.x, self.z, self.m, self.h)

    def __call__(self, t):
        return self.function(t, interpolation_degree(self.m))


class SplineSolver:
    """Factorization of the normal equations for one design and one ``(m, h)``.

    The polynomial part (degree < m) of the targets is fitted by least squares
    and removed before the banded solve; the penalty does not see it, so this
    is exact and makes polynomial reproduction independent of conditioning.
    """

    def __init__(self, grid: Grid, x, m: int, h: float):
        _check_fit_args(m, h)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = x.size
        if n < m:
            raise UniquenessError(f"need n >= m for a unique fit, got n={n}, m={m}")
        if np.unique(x).size < m:
            raise UniquenessError(f"need at least m={m} distinct design points")
        self.grid, self.x, self.m, self.h = grid, x, m, h
        self.evaluation = evaluation_matrix(grid, x, interpolation_degree(m))
        data = (self.evaluation.T @ self.evaluation) / n
        self.system = AugmentedSystem(data, m, penalty_weight(grid, m, h))
        self._basis_x = polynomial_basis(x, m)
        self._basis_grid = polynomial_basis(grid.nodes, m)

    @property
    def n(self) -> int:
        return self.x.size

    def solve(self, z) -> np.ndarray:
        """Grid values of the fit; ``z`` may hold several target vectors as columns."""
        z = np.asarray(z, dtype=float)
        if z.shape[0] != self.n:
            raise ConfigurationError(f"expected {self.n} targets, got {z.shape[0]}")
        coef = np.linalg.lstsq(self._basis_x, z, rcond=None)[0]
        resid = z - self._basis_x @ coef
        return self._basis_grid @ coef + self.system.solve(self.evaluation.T @ resid / self.n)

    def fit(self, z) -> SplineFit:
        z = np.asarray(z, dtype=float)
        f = GridFunction(self.grid, self.solve(z))
        fitted = self.evaluation @ f.values
        data_term = float(np.mean((fitted - z) ** 2))
        penalty = float(self.h ** (2 * self.m) * discrete_energy(f.values, self.grid, self.m))
        diagnostics = {"bandwidth": self.system.bandwidth, "grid_intervals": self.grid.n_intervals}
        return SplineFit(f, self.m, self.h, self.x, z, data_term + penalty, data_term, penalty, diagnostics)


def fit_spline(x, z, m: int, h: float, grid: Grid) -> SplineFit:
    """Smoothing spline of order ``m`` through ``(x, z)`` on ``grid``."""
    return SplineSolver(grid, x, m, h).fit(z)


def noiseless_fit(sample: RegressionSample, m: int, h: float, grid: Grid) -> SplineFit:
    """The conditional mean fit ``f_h``: the spline through ``(X_i, f_o(X_i))``."""
    if sample.f0 is None:
        raise ConfigurationError("noiseless fit needs the true regression values")
    return fit_spline(sample.x, sample.f0, m, h, grid)


def pure_noise_fit(x, d, m: int, h: float, grid: Grid) -> SplineFit:
    """The spline through pure noise, which is the variance part of a fit."""
    return fit_spline(x, d, m, h, grid)


def continuous_noiseless(f0: GridFunction, w: DesignDensity, m: int, h: float) -> GridFunction:
    """Minimizer ``phi_h`` of ``int w (f - f_o)^2 + h^{2m} int (f^(m))^2``."""
    return solve_bvp(w.density * f0, w, m, h)


def cspline_sum(x, d, K: KernelOperator, n: Optional[int] = None) -> GridFunction:
    """``psi(t) = (1/n) sum_i d_i R(X_i, t)``; also the C-spline fit to pure noise."""
    if K.order != 0:
        raise ConfigurationError("cspline_sum needs the undifferentiated kernel")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
    total = K.weighted_row_sum(x, d)
    if n is not None and n != x.size:
        total = total * (x.size / n)
    return total


@dataclass(frozen=True, eq=False)
class DecompositionResult:
    """``f^{nh} = f_h + psi + eps`` with the variance part ``phi = f^{nh} - f_h``."""

    fit: GridFunction
    conditional: GridFunction
    variance: GridFunction
    kernel_sum: GridFunction
    remainder: GridFunction
    bias: Optional[GridFunction]
    sup_norms: dict
    wmh_norms: dict
    m: int
    h: float

    def parts(self) -> dict:
        out = {
            "fit": self.fit,
            "conditional": self.conditional,
            "variance": self.variance,
            "kernel_sum": self.kernel_sum,
            "remainder": self.remainder,
        }
        if self.bias is not None:
            out["bias"] = self.bias
        return out


TruthLike = Union[RegressionFunction, GridFunction, None]


def _truth_on(truth: TruthLike, grid: Grid) -> Optional[GridFunction]:
    if truth is None or isinstance(truth, GridFunction):
        return truth
    return truth.on(grid)


def decompose(
    sample: RegressionSample,
    m: int,
    h: float,
    K: KernelOperator,
    truth: TruthLike = None,
    solver: Optional[SplineSolver] = None,
) -> DecompositionResult:
    """Split a fit into conditional mean, kernel sum and remainder.

    ``K`` must be the reproducing kernel for ``(w, m, h)``. ``truth`` is the
    regression function itself (for the bias); the sample must carry
    ``f0`` values at the design points.
    """
    if sample.f0 is None or sample.d is None:
        raise ConfigurationError("decompose needs a sample with known f0 and noise")
    if K.order != 0 or K.m != m or K.h != h:
        raise ConfigurationError("kernel parameters do not match (m, h)")
    grid = K.grid
    solver = solver or SplineSolver(grid, sample.x, m, h)
    both = solver.solve(np.column_stack([sample.y, sample.f0]))
    f_nh = GridFunction(grid, both[:, 0])
    f_h = GridFunction(grid, both[:, 1])
    phi = f_nh - f_h
    psi = cspline_sum(sample.x, sample.d, K)
    eps = phi - psi
    truth_grid = _truth_on(truth, grid)
    bias = None if truth_grid is None else f_h - truth_grid
    parts = {"fit": f_nh, "conditional": f_h, "variance": phi, "kernel_sum": psi, "remainder": eps}
    if bias is not None:
        parts["bias"] = bias
        parts["error"] = f_nh - truth_grid
    sup_norms = {k: v.sup_norm() for k, v in parts.items()}
    wmh_norms = {k: norm_wmh(v, K.density, m, h) for k, v in parts.items()}
    return DecompositionResult(f_nh, f_h, phi, psi, eps, bias, sup_norms, wmh_norms, m, h)
