"""Reproducing kernels as Green's functions, and the exponential-kernel machinery.

The kernel ``R(t, s)`` of the weighted Sobolev space is the Green's function
of

    (-h^2)^m u^(2m) + w u = v,   u^(k)(0) = u^(k)(1) = 0,  k = m..2m-1.

It is computed from the variational form: piecewise-linear Galerkin mass
matrix for ``int w u^2``, scaled m-th differences for ``int (u^(m))^2``. The
natural boundary conditions come for free.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.signal import lfilter

from ._banded import AugmentedSystem, mass_matrix, penalty_weight, polynomial_basis
from .core import (
    MAX_ORDER,
    ConfigurationError,
    DesignDensity,
    Grid,
    GridFunction,
    differentiate,
    inner_wmh,
    interpolation_degree,
    evaluation_matrix,
)


def _check_bvp(grid: Grid, m: int, h: float) -> None:
    if not 1 <= m <= MAX_ORDER:
        raise ConfigurationError(f"order m must be in 1..{MAX_ORDER}, got {m}")
    if not 0.0 < h <= 1.0:
        raise ConfigurationError(f"smoothing parameter h must be in (0, 1], got {h}")
    if grid.n_intervals < 8 * m:
        raise ConfigurationError(f"grid needs at least {8 * m} intervals for m={m}")


class _BVPSystem:
    def __init__(self, w: DesignDensity, m: int, h: float):
        grid = w.grid
        self.mass = mass_matrix(grid, w.density.values)
        self.solver = AugmentedSystem(self.mass, m, penalty_weight(grid, m, h))
        T = polynomial_basis(grid.nodes, m)
        self.basis = T
        self.gram = T.T @ (self.mass @ T)


_systems: dict = {}
_systems_lock = threading.Lock()


def _system(w: DesignDensity, m: int, h: float) -> _BVPSystem:
    key = (w.key, m, float(h))
    with _systems_lock:
        system = _systems.get(key)
        if system is None:
            if len(_systems) > 64:
                _systems.clear()
            system = _systems[key] = _BVPSystem(w, m, h)
    return system


def solve_bvp(v: GridFunction, w: DesignDensity, m: int, h: float) -> GridFunction:
    """Solve the 2m-order boundary value problem with right-hand side ``v``.

    The load vector is ``M_w (v / w)`` with ``M_w`` the weighted mass matrix,
    so ``v = w * p`` with ``p`` a polynomial of degree < m returns ``p`` up to
    rounding. The polynomial part of ``v / w`` is split off before the solve.
    """
    grid = w.grid
    _check_bvp(grid, m, h)
    if v.grid != grid:
        raise ConfigurationError("right-hand side and density live on different grids")
    system = _system(w, m, h)
    g = v.values / w.density.values
    Mg = system.mass @ g
    coef = np.linalg.solve(system.gram, system.basis.T @ Mg)
    poly = system.basis @ coef
    u = poly + system.solver.solve(Mg - system.mass @ poly)
    return GridFunction(grid, u)


def discrete_delta(w: DesignDensity, index: int) -> GridFunction:
    """Grid function with unit point mass at node ``index`` under the mass matrix.

    ``solve_bvp(discrete_delta(w, j), w, m, h)`` is column ``j`` of the kernel.
    """
    from scipy.sparse.linalg import spsolve

    M = mass_matrix(w.grid, w.density.values).tocsc()
    e = np.zeros(w.grid.size)
    e[index] = 1.0
    return GridFunction(w.grid, w.density.values * spsolve(M, e))


# --------------------------------------------------------------------------
# kernel operators


@dataclass(frozen=True, eq=False)
class KernelOperator:
    """Discretized kernel ``A(t_i, s_j)``, possibly differentiated in ``s``.

    ``function`` optionally gives the kernel in closed form, in which case
    rows are evaluated exactly instead of interpolated.
    """

    grid: Grid
    matrix: np.ndarray
    h: float
    m: Optional[int] = None
    density: Optional[DesignDensity] = None
    order: int = 0
    function: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (self.grid.size, self.grid.size):
            raise ConfigurationError("kernel matrix must be square over the grid")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    @property
    def interpolation_degree(self) -> int:
        return interpolation_degree(self.m or 1)

    def rows(self, x, s: Optional[np.ndarray] = None) -> np.ndarray:
        """Kernel rows ``A(x_i, s)``; ``s`` defaults to the grid nodes."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.function is not None:
            s = self.grid.nodes if s is None else np.asarray(s, dtype=float)
            return self.function(x[:, None], s[None, :])
        if s is not None:
            raise ConfigurationError("interpolated kernels are only available on the grid")
        return evaluation_matrix(self.grid, x, self.interpolation_degree) @ self.matrix

    def weighted_row_sum(self, x, weights) -> GridFunction:
        """``(1/n) sum_i weights_i A(x_i, .)`` on the grid."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        weights = np.broadcast_to(np.asarray(weights, dtype=float), x.shape)
        n = x.size
        if self.function is not None:
            return GridFunction(self.grid, weights @ self.rows(x) / n)
        E = evaluation_matrix(self.grid, x, self.interpolation_degree)
        return GridFunction(self.grid, (E.T @ weights) @ self.matrix / n)

    def row(self, index: int) -> GridFunction:
        return GridFunction(self.grid, self.matrix[index])

    def relative_asymmetry(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)) / np.max(np.abs(self.matrix)))

    def row_integral_defect(self) -> float:
        """``max_i |sum_j K_ij w_j q_j - 1|`` with trapezoid weights ``q``."""
        if self.density is None:
            raise ConfigurationError("row integrals need a design density")
        weights = self.density.density.values * self.grid.weights
        return float(np.max(np.abs(self.matrix @ weights - 1.0)))


def greens_operator(w: DesignDensity, m: int, h: float) -> KernelOperator:
    """Reproducing kernel ``R_wmh`` on the grid of ``w``.

    Column ``j`` solves the boundary value problem with a unit point load at
    ``s_j``; one factorization serves all columns.
    """
    grid = w.grid
    _check_bvp(grid, m, h)
    system = _system(w, m, h)
    K = system.solver.solve(np.eye(grid.size))
    return KernelOperator(grid, K, h, m, w, 0)


def reproduce(f: GridFunction, K: KernelOperator, index: int) -> float:
    """``<f, R(t_index, .)>_wmh`` by trapezoid quadrature; approximately ``f(t_index)``."""
    if K.order != 0 or K.m is None:
        raise ConfigurationError("reproduce needs an undifferentiated reproducing kernel")
    return inner_wmh(f, K.row(index), K.density, K.m, K.h)


def kernel_derivative(K: KernelOperator, order: int) -> KernelOperator:
    """Differentiate every row in the second argument ``order`` times."""
    if K.order != 0:
        raise ConfigurationError("differentiate the base kernel, not a derivative")
    if order < 0 or (K.m is not None and order > K.m):
        raise ConfigurationError(f"derivative order must be in 0..{K.m}, got {order}")
    if order == 0:
        return K
    D = differentiate(K.matrix, K.grid, order, axis=1)
    return KernelOperator(K.grid, D, K.h, K.m, K.density, order)


@dataclass(frozen=True)
class ConvolutionLikeDiagnostics:
    h: float
    order: int
    l1: float
    sup: float
    bv: float

    def as_dict(self) -> dict:
        return {"h": self.h, "order": self.order, "l1": self.l1, "sup": self.sup, "bv": self.bv}


def convolution_like_diagnostics(K: KernelOperator) -> ConvolutionLikeDiagnostics:
    """Constants of the convolution-like conditions for ``h^order * A``.

    Reports ``sup_t ||A(., t)||_L1``, ``h sup |A|`` and ``h sup_t |A(., t)|_BV``.
    """
    A = K.h**K.order * K.matrix
    l1 = np.max(K.grid.integrate(np.abs(A), axis=0))
    sup = K.h * np.max(np.abs(A))
    bv = K.h * np.max(np.sum(np.abs(np.diff(A, axis=0)), axis=0))
    return ConvolutionLikeDiagnostics(K.h, K.order, float(l1), float(sup), float(bv))


# --------------------------------------------------------------------------
# exponential kernel


def exp_kernel(x, h: float):
    """``g_h(x) = h^{-1} exp(-x/h)`` for ``x >= 0`` and 0 otherwise."""
    if h <= 0:
        raise ConfigurationError("h must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, np.exp(-np.maximum(x, 0.0) / h) / h, 0.0)
    return out if out.ndim else float(out)


def exponential_family(grid: Grid, h: float) -> KernelOperator:
    """The convolution kernel ``A(x, s) = g_h(x - s)`` as a kernel operator."""
    fn = lambda x, s: exp_kernel(x - s, h)  # noqa: E731
    t = grid.nodes
    return KernelOperator(grid, fn(t[:, None], t[None, :]), h, None, None, 0, fn)


def _cell_weights(spacing: float, h: float) -> tuple[float, float, float]:
    """Exact integrals of ``g_h`` against the two hat functions of one cell."""
    rho = spacing / h
    decay = math.exp(-rho)
    total = -math.expm1(-rho)
    far = (total - rho * decay) / rho
    return decay, total - far, far


def exp_representation(u: GridFunction, h: float) -> GridFunction:
    """``h g_h(x) u(0) + int_0^x g_h(x - z) (h u'(z) + u(z)) dz``.

    The integral is evaluated exactly for the piecewise-linear interpolant of
    ``u``, whose derivative is constant on each cell, so kinks such as the
    diagonal of an ``m = 1`` kernel are reproduced to rounding error.
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    grid = u.grid
    v = u.values
    decay, near, far = _cell_weights(grid.spacing, h)
    forcing = np.zeros_like(v)
    forcing[1:] = near * v[1:] + far * v[:-1] + np.diff(v) * (-h * np.expm1(-grid.spacing / h) / grid.spacing)
    integral = lfilter([1.0], [1.0, -decay], forcing)
    t = grid.nodes
    return GridFunction(grid, np.exp(-t / h) * u.values[0] + integral)


def exp_sum_at(x, d, h: float, z) -> np.ndarray:
    """``(1/n) sum_i d_i g_h(x_i - z)`` at the points ``z``."""
    x = np.asarray(x, dtype=float)
    d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.empty(z.size)
    chunk = max(1, 2_000_000 // max(x.size, 1))
    for start in range(0, z.size, chunk):
        zz = z[start : start + chunk]
        out[start : start + chunk] = exp_kernel(x[None, :] - zz[:, None], h) @ d
    return out / x.size


def exp_sum_sup(x, d, h: float) -> float:
    """Exact ``sup_{z in [0,1]} |(1/n) sum_i d_i g_h(x_i - z)|``.

    Between design points the sum is a multiple of ``exp(z/h)``, so the
    supremum is attained at one of the (distinct) design points.
    """
    x = np.asarray(x, dtype=float)
    d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
    n = x.size
    if n == 0:
        return 0.0
    order = np.argsort(x, kind="stable")
    xs, ds = x[order], d[order]
    uniq, first = np.unique(xs, return_index=True)
    dsum = np.add.reduceat(ds, first)
    factors = np.exp(-np.diff(uniq) / h)
    acc = 0.0
    best = 0.0
    for k in range(uniq.size - 1, -1, -1):
        acc = dsum[k] + (factors[k] * acc if k < uniq.size - 1 else 0.0)
        best = max(best, abs(acc))
    return best / (n * h)


def domination_ratio(A: KernelOperator, d, x, h: Optional[float] = None) -> float:
    """``||(1/n) sum d_i h^l A(x_i, .)||_inf / ||(1/n) sum d_i g_h(x_i - .)||_inf``.

    The numerator is maximized over the grid (and over the design points when
    ``A`` has a closed form); the denominator is the exact supremum.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
    if x.size == 0:
        raise ConfigurationError("need at least one design point")
    if np.any(x <= 0):
        raise ConfigurationError("design points must be positive")
    h = A.h if h is None else h
    if not np.any(d):
        return 0.0
    scale = h**A.order
    if A.function is not None:
        s = np.concatenate([A.grid.nodes, x])
        numerator = np.max(np.abs(d @ A.rows(x, s))) * scale / x.size
    else:
        numerator = A.weighted_row_sum(x, d).sup_norm() * scale
    denominator = exp_sum_sup(x, d, h)
    return float(numerator / denominator)
