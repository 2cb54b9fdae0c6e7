"""Random sums over the design and the discrepancy functionals they control.

Two kinds of sums appear: reproducing-kernel sums
``S(t) = (1/n) sum D_i R^(l)(X_i, t)`` and exponential sums
``s(z) = (1/n) sum D_i g_h(X_i - z)``. The latter with ``D = 1`` is the
one-sided kernel density estimator.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .core import (
    ConfigurationError,
    DesignDensity,
    Grid,
    GridFunction,
    ModelConfig,
    UndefinedInputError,
    derivative,
    l1_norm,
    norm_wmh,
    random_smooth_functions,
    sample_regression,
)
from .greens import (
    KernelOperator,
    _cell_weights,
    exp_kernel,
    exp_sum_sup,
    greens_operator,
)

__all__ = [
    "rk_sum",
    "exp_sum",
    "exp_sum_sup",
    "density_estimate",
    "expected_density",
    "design_discrepancy",
    "discrepancy_normalizer",
    "zeta_ratio",
    "pair_discrepancy",
    "design_defect",
    "defect_family",
    "DiagnosticsRecord",
    "diagnose",
    "diagnostics_sweep",
    "exp_kernel",
]


def log_factor(n: int, h: float) -> float:
    """``max(log(1/h), log log n)``."""
    return max(np.log(1.0 / h), np.log(np.log(n)))


def rk_sum(x, d, K: KernelOperator, order: int = 0) -> GridFunction:
    """``(1/n) sum_i d_i R^(order)(X_i, .)`` with ``K`` already differentiated."""
    if K.order != order:
        raise ConfigurationError(f"kernel has derivative order {K.order}, expected {order}")
    return K.weighted_row_sum(x, d)


def exp_sum(x, d, h: float, grid: Grid) -> GridFunction:
    """``s(z) = (1/n) sum_i d_i g_h(X_i - z)`` on the grid nodes.

    Points are binned into grid cells ``[z_k, z_{k+1})`` and the sum is
    carried from right to left with the factor ``exp(-delta/h)``, which costs
    O(n + N) and never overflows.
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = np.broadcast_to(np.asarray(d, dtype=float), x.shape)
    n = x.size
    N = grid.n_intervals
    cell = np.clip(np.floor(x * N).astype(np.int64), 0, N)
    offset = x - grid.nodes[cell]
    local = np.bincount(cell, weights=d * np.exp(-offset / h), minlength=grid.size)
    decay = np.exp(-grid.spacing / h)
    acc = lfilter([1.0], [1.0, -decay], local[::-1])[::-1]
    return GridFunction(grid, acc / (n * h))


def density_estimate(x, h: float, grid: Grid) -> GridFunction:
    """One-sided exponential kernel density estimator ``w^{nh}``."""
    return exp_sum(x, 1.0, h, grid)


def expected_density(w: DesignDensity, h: float) -> GridFunction:
    """``E w^{nh}(t) = int_t^1 g_h(tau - t) w(tau) dtau``.

    Exact for piecewise-linear ``w``, in particular ``1 - exp(-(1-t)/h)`` for
    the uniform density.
    """
    if h <= 0:
        raise ConfigurationError("h must be positive")
    grid = w.grid
    v = w.density.values
    decay, near, far = _cell_weights(grid.spacing, h)
    forcing = np.zeros_like(v)
    forcing[:-1] = near * v[:-1] + far * v[1:]
    acc = lfilter([1.0], [1.0, -decay], forcing[::-1])[::-1]
    return GridFunction(grid, acc)


def _at(f: GridFunction, x) -> np.ndarray:
    return f(np.asarray(x, dtype=float))


def design_discrepancy(f: GridFunction, x, w: DesignDensity) -> float:
    """``int f d(W_n - W) = (1/n) sum f(X_i) - int f w``."""
    return float(np.mean(_at(f, x)) - f.grid.integrate(f.values * w.density.values))


def discrepancy_normalizer(f: GridFunction, w: DesignDensity, h: float) -> float:
    """``||f||_{L1(w)} + h ||f'||_{L1}``."""
    return l1_norm(f, w) + h * l1_norm(derivative(f, 1))


def zeta_ratio(functions: Sequence[GridFunction], x, w: DesignDensity, h: float) -> float:
    """Largest normalized discrepancy over a family of test functions."""
    best = 0.0
    for f in functions:
        scale = discrepancy_normalizer(f, w, h)
        if scale > 0:
            best = max(best, abs(design_discrepancy(f, x, w)) / scale)
    return best


def pair_discrepancy(f: GridFunction, g: GridFunction, x, w: DesignDensity, m: int, h: float) -> float:
    """``|int f g d(W_n - W)| / (||f||_wmh ||g||_wmh)``, zero if either norm vanishes."""
    nf = norm_wmh(f, w, m, h)
    ng = norm_wmh(g, w, m, h)
    if nf == 0 or ng == 0:
        return 0.0
    return abs(design_discrepancy(f * g, x, w)) / (nf * ng)


def design_defect(f: GridFunction, x, w: DesignDensity, m: int, h: float) -> float:
    """``{(1/n) sum f(X_j)^2 + h^{2m} ||f^(m)||^2} / ||f||_wmh^2``."""
    norm = norm_wmh(f, w, m, h)
    if norm == 0:
        raise UndefinedInputError("design defect is undefined for a function of zero norm")
    fm = derivative(f, m).values
    penalty = h ** (2 * m) * f.grid.integrate(fm * fm)
    return float((np.mean(_at(f, x) ** 2) + penalty) / norm**2)


def defect_family(grid: Grid, count: int = 20, seed: int = 0, max_frequency: int = 6) -> list[GridFunction]:
    """Fixed family of band-limited test functions for defect and discrepancy sweeps."""
    return random_smooth_functions(grid, count, np.random.default_rng(seed), max_frequency)


@dataclass(frozen=True)
class DiagnosticsRecord:
    h: float
    n: int
    zeta: float
    eta: float
    r: float
    sup_rk_sum: float
    sup_exp_sum: float
    sup_density_error: float

    def as_dict(self) -> dict:
        return asdict(self)


def diagnose(
    x,
    d,
    w: DesignDensity,
    m: int,
    h: float,
    K: Optional[KernelOperator] = None,
    family: Optional[Sequence[GridFunction]] = None,
) -> DiagnosticsRecord:
    """Design and noise diagnostics at one ``(n, h)``.

    ``zeta`` and ``eta`` are reported relative to ``sqrt(L / (nh))`` with
    ``L = max(log(1/h), log log n)``; ``r`` is the smallest design defect over
    the family.
    """
    grid = w.grid
    x = np.asarray(x, dtype=float)
    n = x.size
    family = list(family) if family is not None else defect_family(grid)
    scale = np.sqrt(log_factor(n, h) / (n * h))
    zeta = zeta_ratio(family, x, w, h) / scale
    eta = 0.0
    for i, f in enumerate(family):
        for g in family[i:]:
            eta = max(eta, pair_discrepancy(f, g, x, w, m, h))
    eta /= scale
    r = min(design_defect(f, x, w, m, h) for f in family)
    K = K if K is not None else greens_operator(w, m, h)
    s_rk = rk_sum(x, d, K).sup_norm()
    s_exp = exp_sum_sup(x, d, h)
    dens = (density_estimate(x, h, grid) - expected_density(w, h)).sup_norm()
    return DiagnosticsRecord(h, n, zeta, eta, r, s_rk, s_exp, dens)


def diagnostics_sweep(
    model: ModelConfig,
    m: int,
    n_values: Sequence[int],
    h_values: Sequence[float],
    seed: int = 0,
) -> list[DiagnosticsRecord]:
    """Run :func:`diagnose` over an ``(n, h)`` grid; one sample per ``n`` shared across ``h``."""
    grid = model.density.grid
    family = defect_family(grid)
    kernels = {h: greens_operator(model.density, m, h) for h in h_values}
    out = []
    for n in n_values:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(n),)))
        sample = sample_regression(model.with_n(int(n)), rng)
        for h in h_values:
            out.append(diagnose(sample.x, sample.d, model.density, m, h, kernels[h], family))
    return out
