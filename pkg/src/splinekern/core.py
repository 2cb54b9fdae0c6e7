"""Grids, grid functions, Sobolev-type norms, design densities and sampling.

Every function on [0, 1] is represented by its values on a uniform grid.
Integrals use the composite trapezoid rule, derivatives use repeated
second-order differences, and point evaluation off the grid uses local
Lagrange interpolation.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import numpy as np

DEFAULT_GRID_SIZE = 2000
MAX_ORDER = 4

SeedLike = Union[int, np.random.SeedSequence, None]


class ConfigurationError(ValueError):
    """Raised when parameters violate an operation's preconditions."""


class UniquenessError(ConfigurationError):
    """Raised when a smoothing problem has no unique solution (n < m)."""


class UndefinedInputError(ValueError):
    """Raised when a ratio is requested for an input with zero norm."""


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_i = i / N`` on [0, 1] with trapezoid weights."""

    n_intervals: int

    @property
    def size(self) -> int:
        return self.n_intervals + 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_intervals

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.arange(self.size, dtype=float) / self.n_intervals
        t.flags.writeable = False
        return t

    @cached_property
    def weights(self) -> np.ndarray:
        q = np.full(self.size, self.spacing)
        q[0] = q[-1] = 0.5 * self.spacing
        q.flags.writeable = False
        return q

    def integrate(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        """Trapezoid rule along ``axis``."""
        return np.tensordot(values, self.weights, axes=([axis], [0]))


def make_grid(n_intervals: int = DEFAULT_GRID_SIZE) -> Grid:
    """Build the uniform grid with ``n_intervals`` cells.

    Operations that differentiate or solve boundary value problems check
    their own (stricter) resolution requirements.
    """
    if int(n_intervals) != n_intervals or n_intervals < 2:
        raise ConfigurationError(f"grid needs at least 2 intervals, got {n_intervals}")
    return Grid(int(n_intervals))


# --------------------------------------------------------------------------
# interpolation


def interpolation_degree(m: int) -> int:
    """Degree of the local interpolant used for point evaluation at order m."""
    return max(3, m + 1)


def _stencils(grid: Grid, x: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ConfigurationError("evaluation points must lie in [0, 1]")
    if degree > grid.n_intervals:
        raise ConfigurationError(
            f"interpolation degree {degree} needs more than {grid.n_intervals} intervals"
        )
    N = grid.n_intervals
    cell = np.minimum(np.floor(x * N).astype(np.int64), N - 1)
    start = np.clip(cell - (degree - 1) // 2, 0, N - degree)
    s = x * N - start
    offsets = np.arange(degree + 1)
    w = np.ones((x.size, degree + 1))
    for k in offsets:
        for j in offsets:
            if j != k:
                w[:, k] *= (s - j) / (k - j)
    cols = start[:, None] + offsets[None, :]
    return cols, w


def evaluation_matrix(grid: Grid, x: Sequence[float], degree: int = 3):
    """Sparse matrix ``E`` with ``(E @ f.values)[i] = f(x[i])`` (local Lagrange)."""
    from scipy import sparse

    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols, w = _stencils(grid, x, degree)
    rows = np.repeat(np.arange(x.size), degree + 1)
    return sparse.csr_matrix(
        (w.ravel(), (rows, cols.ravel())), shape=(x.size, grid.size)
    )


def interpolate(grid: Grid, values: np.ndarray, x, degree: int = 3) -> np.ndarray:
    """Evaluate grid values (last axis) at arbitrary points of [0, 1]."""
    x_arr = np.asarray(x, dtype=float)
    cols, w = _stencils(grid, x_arr.ravel(), degree)
    out = np.einsum("...ij,ij->...i", np.asarray(values)[..., cols], w)
    return out.reshape(np.shape(values)[:-1] + x_arr.shape)


# --------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a function at the nodes of a grid.

    Supports pointwise arithmetic with scalars and other grid functions on the
    same grid, and evaluation at arbitrary points through ``__call__``.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ConfigurationError(
                f"expected {self.grid.size} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ConfigurationError("grid function values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        return cls(grid, np.broadcast_to(fn(grid.nodes), (grid.size,)))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "GridFunction":
        return cls(grid, np.full(grid.size, float(value)))

    def __call__(self, x, degree: int = 3) -> np.ndarray:
        return interpolate(self.grid, self.values, x, degree)

    def __len__(self) -> int:
        return self.grid.size

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise ConfigurationError("grid functions live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return GridFunction(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.grid, self.values / self._other(other))

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"GridFunction(N={self.grid.n_intervals}, sup={self.sup_norm():.6g})"


def _first_difference(values: np.ndarray, spacing: float, axis: int) -> np.ndarray:
    v = np.moveaxis(values, axis, -1)
    d = np.empty_like(v)
    d[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * spacing)
    # written as differences so constants give exactly zero
    d[..., 0] = (4 * (v[..., 1] - v[..., 0]) - (v[..., 2] - v[..., 0])) / (2 * spacing)
    d[..., -1] = (4 * (v[..., -1] - v[..., -2]) - (v[..., -1] - v[..., -3])) / (2 * spacing)
    return np.moveaxis(d, -1, axis)


def differentiate(values: np.ndarray, grid: Grid, order: int, axis: int = -1) -> np.ndarray:
    """Array version of :func:`derivative` acting along ``axis``."""
    if order < 0 or order > MAX_ORDER:
        raise ConfigurationError(f"derivative order must be in 0..{MAX_ORDER}, got {order}")
    if grid.n_intervals < max(4 * order, 2):
        raise ConfigurationError(f"grid too coarse for a derivative of order {order}")
    out = np.asarray(values, dtype=float)
    for _ in range(order):
        out = _first_difference(out, grid.spacing, axis)
    return out


def derivative(f: GridFunction, order: int) -> GridFunction:
    """``order``-fold centered difference (one-sided second order at the ends)."""
    return GridFunction(f.grid, differentiate(f.values, f.grid, order))


# --------------------------------------------------------------------------
# norms


def _check_mh(m: int, h: float) -> None:
    if not 1 <= m <= MAX_ORDER:
        raise ConfigurationError(f"order m must be in 1..{MAX_ORDER}, got {m}")
    if not 0.0 < h <= 1.0:
        raise ConfigurationError(f"smoothing parameter h must be in (0, 1], got {h}")


def inner_wmh(f: GridFunction, g: GridFunction, w: Optional["DesignDensity"], m: int, h: float) -> float:
    """Weighted Sobolev inner product ``int f g w + h^{2m} int f^(m) g^(m)``.

    ``w=None`` means the uniform weight.
    """
    _check_mh(m, h)
    grid = f.grid
    weight = 1.0 if w is None else w.density.values
    low = grid.integrate(f.values * g.values * weight)
    high = grid.integrate(differentiate(f.values, grid, m) * differentiate(g.values, grid, m))
    return float(low + h ** (2 * m) * high)


def norm_mh(f: GridFunction, m: int, h: float) -> float:
    """``{ ||f||^2 + h^{2m} ||f^(m)||^2 }^{1/2}`` by trapezoid quadrature."""
    return math.sqrt(max(inner_wmh(f, f, None, m, h), 0.0))


def norm_wmh(f: GridFunction, w: "DesignDensity", m: int, h: float) -> float:
    """As :func:`norm_mh` with the L2 part weighted by the design density."""
    return math.sqrt(max(inner_wmh(f, f, w, m, h), 0.0))


def bv_seminorm(f: GridFunction) -> float:
    """Total variation of the nodal values."""
    return float(np.sum(np.abs(np.diff(f.values))))


def l1_norm(f: GridFunction, w: Optional["DesignDensity"] = None) -> float:
    weight = 1.0 if w is None else w.density.values
    return float(f.grid.integrate(np.abs(f.values) * weight))


# --------------------------------------------------------------------------
# design densities


@dataclass(frozen=True, eq=False)
class DesignDensity:
    """Design density ``w`` on the grid together with its distribution function.

    Use :meth:`from_function` or one of the named constructors; they normalize
    the values so the trapezoid integral is one.
    """

    density: GridFunction
    cdf: GridFunction
    name: str = "custom"

    def __post_init__(self):
        w = self.density.values
        if np.min(w) <= 0:
            raise ConfigurationError("design density must be bounded away from zero")
        if abs(self.density.integral() - 1.0) > 1e-8:
            raise ConfigurationError("design density must integrate to one")
        W = self.cdf.values
        if np.any(np.diff(W) < 0) or abs(W[0]) > 1e-8 or abs(W[-1] - 1.0) > 1e-8:
            raise ConfigurationError("cdf must increase from 0 to 1")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray], name: str = "custom") -> "DesignDensity":
        w = np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), (grid.size,)).copy()
        total = grid.integrate(w)
        if abs(total - 1.0) > 1e-14:
            w /= total
        increments = 0.5 * grid.spacing * (w[1:] + w[:-1])
        W = np.concatenate([[0.0], np.cumsum(increments)])
        W /= W[-1]
        return cls(GridFunction(grid, w), GridFunction(grid, W), name)

    @classmethod
    def uniform(cls, grid: Grid) -> "DesignDensity":
        return cls.from_function(grid, lambda t: np.ones_like(t), "uniform")

    @classmethod
    def linear(cls, grid: Grid, slope: float = 1.0) -> "DesignDensity":
        """Density proportional to ``1 + slope * t`` (``slope=1`` gives (2/3)(1+t))."""
        if slope <= -1:
            raise ConfigurationError("linear density must stay positive on [0, 1]")
        return cls.from_function(grid, lambda t: 1.0 + slope * t, "linear")

    @classmethod
    def truncated_normal(cls, grid: Grid, mean: float = 0.5, sd: float = 0.3) -> "DesignDensity":
        if sd <= 0:
            raise ConfigurationError("sd must be positive")
        return cls.from_function(
            grid, lambda t: np.exp(-0.5 * ((t - mean) / sd) ** 2), "truncated_normal"
        )

    @property
    def grid(self) -> Grid:
        return self.density.grid

    @property
    def lower(self) -> float:
        return float(np.min(self.density.values))

    @property
    def upper(self) -> float:
        return float(np.max(self.density.values))

    @cached_property
    def key(self) -> str:
        """Content hash; equal densities on equal grids share a key."""
        digest = hashlib.sha256(self.density.values.tobytes())
        digest.update(str(self.grid.n_intervals).encode())
        return digest.hexdigest()[:16]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-cdf sampling with linear interpolation of the cdf."""
        u = rng.random(n)
        return np.clip(np.interp(u, self.cdf.values, self.grid.nodes), 0.0, 1.0)


def named_density(grid: Grid, name: str, **params) -> DesignDensity:
    constructors = {
        "uniform": DesignDensity.uniform,
        "linear": DesignDensity.linear,
        "truncated_normal": DesignDensity.truncated_normal,
    }
    if name not in constructors:
        raise ConfigurationError(f"unknown density {name!r}; choose from {sorted(constructors)}")
    return constructors[name](grid, **params)


# --------------------------------------------------------------------------
# noise


NOISE_KINDS = ("gaussian", "student_t", "pareto")


@dataclass(frozen=True)
class NoiseSpec:
    """Conditional noise ``D | X = x  ~  scale(x) * Z``.

    ``Z`` is standard normal, Student-t with ``shape`` degrees of freedom, or a
    symmetrized Lomax variable with tail index ``shape``. ``kappa`` is the
    declared moment order; it must stay below the distribution's last finite
    moment.
    """

    kind: str = "gaussian"
    scale: Union[float, Callable[[np.ndarray], np.ndarray]] = 1.0
    kappa: float = 4.0
    shape: Optional[float] = None

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def violations(self) -> list[str]:
        problems = []
        if self.kind not in NOISE_KINDS:
            problems.append(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
            return problems
        if not self.kappa > 2:
            problems.append(
                f"kappa={self.kappa}: the noise must have a finite moment of order kappa > 2"
            )
        if self.kind != "gaussian":
            if self.shape is None or not self.shape > 2:
                problems.append(f"{self.kind} noise needs shape > 2 for finite variance")
            elif not self.kappa < self.shape:
                problems.append(
                    f"kappa={self.kappa} must be below the tail index {self.shape} of {self.kind} noise"
                )
        if not callable(self.scale) and not (self.scale >= 0 and math.isfinite(self.scale)):
            problems.append("noise scale must be finite and nonnegative")
        return problems

    @property
    def unit_variance(self) -> float:
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "student_t":
            return self.shape / (self.shape - 2.0)
        a = self.shape
        return 2.0 / ((a - 1.0) * (a - 2.0))

    def scale_at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.scale):
            return np.broadcast_to(np.asarray(self.scale(x), dtype=float), np.shape(x))
        return np.full(np.shape(x), float(self.scale))

    def moment_bound(self, grid: Optional[Grid] = None) -> float:
        """``M = sup_x E[D^2 | X = x]`` (sup taken over the grid nodes)."""
        t = (grid or make_grid()).nodes
        return float(np.max(self.scale_at(t) ** 2) * self.unit_variance)

    def sample(self, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        n = np.size(x)
        if self.kind == "gaussian":
            z = rng.standard_normal(n)
        elif self.kind == "student_t":
            z = rng.standard_t(self.shape, n)
        else:
            z = rng.pareto(self.shape, n) * rng.choice((-1.0, 1.0), n)
        return self.scale_at(x) * z


# --------------------------------------------------------------------------
# regression functions


@dataclass(frozen=True)
class RegressionFunction:
    """Analytic regression function with known derivatives."""

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray, int], np.ndarray]
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.value(np.asarray(x, dtype=float)), dtype=float)

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, np.broadcast_to(self(grid.nodes), (grid.size,)))

    def derivative_sup(self, order: int, grid: Optional[Grid] = None) -> float:
        t = (grid or make_grid()).nodes
        return float(np.max(np.abs(self.derivative(t, order))))


def sine(frequency: float = 1.0, amplitude: float = 1.0, phase: float = 0.0) -> RegressionFunction:
    """``amplitude * sin(2 pi frequency t + phase)``."""
    omega = 2 * math.pi * frequency

    def deriv(t, k):
        return amplitude * omega**k * np.sin(omega * t + phase + k * math.pi / 2)

    return RegressionFunction(
        "sin",
        lambda t: amplitude * np.sin(omega * t + phase),
        deriv,
        {"frequency": frequency, "amplitude": amplitude, "phase": phase},
    )


def cosine(frequency: float = 1.0, amplitude: float = 1.0) -> RegressionFunction:
    """``amplitude * cos(2 pi frequency t)``; ``frequency=0.5`` gives cos(pi t)."""
    f = sine(frequency, amplitude, phase=math.pi / 2)
    return RegressionFunction("cos", f.value, f.derivative, {"frequency": frequency, "amplitude": amplitude})


def polynomial(coefficients: Sequence[float]) -> RegressionFunction:
    """Polynomial with ``coefficients`` in increasing degree."""
    p = np.polynomial.Polynomial(np.asarray(coefficients, dtype=float))
    return RegressionFunction(
        "polynomial", p, lambda t, k: p.deriv(k)(t) if k else p(t), {"coefficients": list(coefficients)}
    )


def zero_function() -> RegressionFunction:
    return polynomial([0.0])


def named_regression(name: str, **params) -> RegressionFunction:
    makers = {"sin": sine, "cos": cosine, "polynomial": polynomial, "zero": zero_function}
    if name not in makers:
        raise ConfigurationError(f"unknown regression function {name!r}; choose from {sorted(makers)}")
    return makers[name](**params)


# --------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class ModelConfig:
    regression: RegressionFunction
    density: DesignDensity
    noise: NoiseSpec
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("sample size must be positive")

    def with_n(self, n: int) -> "ModelConfig":
        return ModelConfig(self.regression, self.density, self.noise, n, self.seed)


@dataclass(frozen=True, eq=False)
class RegressionSample:
    x: np.ndarray
    y: np.ndarray
    f0: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    seed: object = None

    def __post_init__(self):
        arrays = {"x": self.x, "y": self.y, "f0": self.f0, "d": self.d}
        n = np.size(self.x)
        for name, arr in arrays.items():
            if arr is None:
                continue
            arr = np.array(arr, dtype=float)
            if arr.shape != (n,):
                raise ConfigurationError(f"{name} must have length {n}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(self.x < 0) or np.any(self.x > 1):
            raise ConfigurationError("design points must lie in [0, 1]")
        if self.f0 is not None and self.d is not None and not np.array_equal(self.y, self.f0 + self.d):
            raise ConfigurationError("responses must equal f0 + d")

    @property
    def n(self) -> int:
        return int(np.size(self.x))


def sample_regression(config: ModelConfig, seed: SeedLike = None) -> RegressionSample:
    """Draw ``(X_i, Y_i)`` from the model; ``seed`` defaults to ``config.seed``."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    x = config.density.sample(rng, config.n)
    d = config.noise.sample(rng, x)
    f0 = config.regression(x)
    return RegressionSample(x, f0 + d, f0, d, seed)


def random_smooth_functions(grid: Grid, count: int, rng: np.random.Generator, max_frequency: int = 6) -> list[GridFunction]:
    """Random trigonometric polynomials with decaying coefficients."""
    t = grid.nodes
    out = []
    k = np.arange(max_frequency + 1)
    for _ in range(count):
        a = rng.standard_normal(k.size) / (1.0 + k) ** 2
        b = rng.standard_normal(k.size) / (1.0 + k) ** 2
        vals = a @ np.cos(np.pi * np.outer(k, t)) + b @ np.sin(np.pi * np.outer(k, t))
        out.append(GridFunction(grid, vals))
    return out


def write_sample_csv(path, sample: RegressionSample) -> None:
    cols = ["x", "y"]
    data = [sample.x, sample.y]
    if sample.f0 is not None and sample.d is not None:
        cols += ["f0", "d"]
        data += [sample.f0, sample.d]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in zip(*data):
            writer.writerow([repr(float(v)) for v in row])


def read_sample_csv(path) -> RegressionSample:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header[:2] != ["x", "y"] or header[2:] not in ([], ["f0", "d"]):
            raise ConfigurationError(f"sample CSV header must be x,y[,f0,d], got {','.join(header)}")
        rows = [[float(v) for v in row] for row in reader if row]
    cols = np.array(rows, dtype=float).reshape(-1, len(header)).T
    if len(header) == 4:
        return RegressionSample(cols[0], cols[1], cols[2], cols[3])
    return RegressionSample(cols[0], cols[1])
