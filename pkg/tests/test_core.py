import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from splinekern.core import (
    ConfigurationError,
    DesignDensity,
    GridFunction,
    ModelConfig,
    NoiseSpec,
    RegressionSample,
    bv_seminorm,
    derivative,
    evaluation_matrix,
    inner_wmh,
    interpolate,
    l1_norm,
    make_grid,
    norm_mh,
    norm_wmh,
    polynomial,
    random_smooth_functions,
    read_sample_csv,
    sample_regression,
    sine,
    write_sample_csv,
)


# --- grid -----------------------------------------------------------------


def test_small_grid_nodes_and_weights():
    g = make_grid(4)
    np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_array_equal(g.weights, [0.125, 0.25, 0.25, 0.25, 0.125])


@pytest.mark.parametrize("N", [1, 0, -3, 2.5])
def test_too_small_grid_rejected(N):
    with pytest.raises(ConfigurationError):
        make_grid(N)


@given(st.integers(min_value=2, max_value=5000))
def test_weights_sum_to_one(N):
    g = make_grid(N)
    assert abs(g.weights.sum() - 1.0) <= 1e-12
    assert g.nodes[0] == 0 and g.nodes[-1] == 1
    assert np.all(np.diff(g.nodes) > 0)


def test_grid_arrays_are_read_only(grid):
    with pytest.raises(ValueError):
        grid.nodes[0] = 1.0


# --- grid functions ----------------------------------------------------------


def test_grid_function_rejects_nonfinite(small_grid):
    vals = np.zeros(small_grid.size)
    vals[3] = np.nan
    with pytest.raises(ConfigurationError):
        GridFunction(small_grid, vals)


def test_grid_function_rejects_wrong_length(small_grid):
    with pytest.raises(ConfigurationError):
        GridFunction(small_grid, np.zeros(small_grid.size + 1))


def test_mixing_grids_rejected(small_grid, grid):
    with pytest.raises(ConfigurationError):
        GridFunction.constant(small_grid, 1.0) + GridFunction.constant(grid, 1.0)


@pytest.mark.parametrize("degree", [3, 4, 5])
def test_interpolation_exact_on_polynomials(small_grid, rng, degree):
    p = np.polynomial.Polynomial(rng.standard_normal(degree + 1))
    x = np.concatenate([rng.random(200), [0.0, 1.0]])
    vals = interpolate(small_grid, p(small_grid.nodes), x, degree)
    np.testing.assert_allclose(vals, p(x), atol=1e-10)
    E = evaluation_matrix(small_grid, x, degree)
    np.testing.assert_allclose(E @ p(small_grid.nodes), p(x), atol=1e-10)


def test_interpolation_outside_unit_interval_rejected(small_grid):
    with pytest.raises(ConfigurationError):
        interpolate(small_grid, np.zeros(small_grid.size), [1.2])


# --- derivatives ----------------------------------------------------------


def test_derivative_of_constant_is_zero(grid):
    f = GridFunction.constant(grid, 3.7)
    assert derivative(f, 1).sup_norm() == 0.0


def test_second_derivative_of_square(grid):
    f = GridFunction.from_function(grid, lambda t: t**2)
    np.testing.assert_allclose(derivative(f, 2).values, 2.0, atol=1e-8)


def test_derivative_of_sine(grid):
    f = GridFunction.from_function(grid, lambda t: np.sin(2 * np.pi * t))
    err = np.abs(derivative(f, 1).values - 2 * np.pi * np.cos(2 * np.pi * grid.nodes)).max()
    assert err <= 10 * grid.spacing**2 * (2 * np.pi) ** 3


def test_derivative_order_limits():
    g = make_grid(8)
    f = GridFunction.constant(g, 1.0)
    with pytest.raises(ConfigurationError):
        derivative(f, 5)
    with pytest.raises(ConfigurationError):
        derivative(f, 3)  # needs N >= 12


# --- norms ----------------------------------------------------------------


@pytest.mark.parametrize("m,h", [(1, 0.1), (2, 0.5), (3, 1.0)])
def test_norm_of_one(grid, m, h):
    assert norm_mh(GridFunction.constant(grid, 1.0), m, h) == pytest.approx(1.0, abs=1e-14)


def test_norm_mh_identity(grid):
    f = GridFunction.from_function(grid, lambda t: t)
    assert norm_mh(f, 1, 0.5) == pytest.approx(math.sqrt(1 / 3 + 0.25), abs=1e-6)
    assert norm_mh(f, 2, 0.3) == pytest.approx(math.sqrt(1 / 3), abs=1e-6)


def test_norm_mh_rejects_bad_h(grid):
    with pytest.raises(ConfigurationError):
        norm_mh(GridFunction.constant(grid, 1.0), 1, 1.5)
    with pytest.raises(ConfigurationError):
        norm_mh(GridFunction.constant(grid, 1.0), 1, 0.0)


def test_norm_wmh_uniform_equals_norm_mh(grid, uniform, rng):
    f = random_smooth_functions(grid, 1, rng)[0]
    assert norm_wmh(f, uniform, 2, 0.1) == norm_mh(f, 2, 0.1)


def test_norm_wmh_of_one(densities):
    for w in densities.values():
        one = GridFunction.constant(w.grid, 1.0)
        assert norm_wmh(one, w, 2, 0.2) == pytest.approx(1.0, abs=1e-8)


def test_norm_wmh_linear_density(grid):
    w = DesignDensity.linear(grid)
    f = GridFunction.from_function(grid, lambda t: t)
    assert norm_wmh(f, w, 1, 0.1) == pytest.approx(math.sqrt(7 / 18 + 0.01), abs=1e-6)


def test_inner_product_symmetric(grid, densities, rng):
    f, g = random_smooth_functions(grid, 2, rng)
    w = densities["truncated_normal"]
    assert inner_wmh(f, g, w, 2, 0.1) == pytest.approx(inner_wmh(g, f, w, 2, 0.1), rel=1e-14)


def test_bv_seminorm(grid):
    assert bv_seminorm(GridFunction.constant(grid, 2.0)) == 0.0
    f = GridFunction.from_function(grid, lambda t: t**3 - 2 * t)
    mono = GridFunction.from_function(grid, np.exp)
    assert bv_seminorm(mono) == pytest.approx(np.e - 1, rel=1e-14)
    s = GridFunction.from_function(grid, lambda t: np.sin(4 * np.pi * t))
    assert bv_seminorm(s) == pytest.approx(8.0, abs=10 * grid.spacing)
    assert bv_seminorm(f) > 0


def test_l1_norm(grid, uniform):
    f = GridFunction.from_function(grid, lambda t: t - 0.5)
    assert l1_norm(f) == pytest.approx(0.25, abs=1e-6)
    assert l1_norm(f, uniform) == pytest.approx(0.25, abs=1e-6)


# --- norm properties over a test family ---------------------------------------

H_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


@pytest.fixture(scope="module")
def family(grid):
    return random_smooth_functions(grid, 200, np.random.default_rng(7))


def test_norm_equivalence(family, densities):
    w = densities["truncated_normal"]
    w1, w2 = w.lower, w.upper
    for h in H_GRID:
        for f in family[:50]:
            a = norm_mh(f, 2, h)
            b = norm_wmh(f, w, 2, h)
            assert min(1.0, w1) ** 0.5 * a - 1e-10 <= b <= max(1.0, w2) ** 0.5 * a + 1e-10
            assert min(1.0, w1) * a - 1e-10 <= b <= max(1.0, w2) * a + 1e-10


def test_embedding_ratio_stable(family, densities):
    w = densities["linear"]
    per_h = []
    for h in H_GRID:
        per_h.append(max(f.sup_norm() / (h**-0.5 * norm_wmh(f, w, 1, h)) for f in family))
    per_h = np.array(per_h)
    assert np.all(np.isfinite(per_h))
    assert per_h.max() / per_h.min() < 5


def test_multiplication_inequality_stable(family, densities):
    w = densities["uniform"]
    per_h = []
    for h in H_GRID:
        worst = 0.0
        for f, g in zip(family[:40:2], family[1:40:2]):
            fg = f * g
            lhs = l1_norm(fg, w) + h * l1_norm(derivative(fg, 1))
            worst = max(worst, lhs / (norm_wmh(f, w, 1, h) * norm_wmh(g, w, 1, h)))
        per_h.append(worst)
    per_h = np.array(per_h)
    assert per_h.max() / per_h.min() < 5


def test_norm_nesting(family, densities):
    w = densities["linear"]
    for h in (0.05, 0.2):
        ratios = [norm_wmh(f, w, 1, h) / norm_wmh(f, w, 2, h) for f in family[:50]]
        assert max(ratios) < 2.0


def test_quadrature_consistency(rng):
    coarse, fine = make_grid(1000), make_grid(2000)
    fn = lambda t: np.sin(3 * t) + t**2  # noqa: E731
    a = norm_mh(GridFunction.from_function(coarse, fn), 2, 0.1)
    b = norm_mh(GridFunction.from_function(fine, fn), 2, 0.1)
    assert abs(a - b) <= 4 * 30 * coarse.spacing**2


# --- densities --------------------------------------------------------------


@pytest.mark.parametrize("name", ["uniform", "linear", "truncated_normal"])
def test_density_invariants(densities, name):
    w = densities[name]
    assert w.grid.integrate(w.density.values) == pytest.approx(1.0, abs=1e-8)
    assert w.cdf.values[0] == 0.0
    assert w.cdf.values[-1] == pytest.approx(1.0, abs=1e-8)
    assert np.all(np.diff(w.cdf.values) >= 0)
    assert 0 < w.lower <= w.upper


def test_linear_density_values(grid):
    w = DesignDensity.linear(grid)
    np.testing.assert_allclose(w.density.values, (2 / 3) * (1 + grid.nodes), atol=1e-12)


def test_density_must_be_positive(grid):
    with pytest.raises(ConfigurationError):
        DesignDensity.from_function(grid, lambda t: t - 0.5)


# --- noise ----------------------------------------------------------------


def test_noise_kappa_rule():
    with pytest.raises(ConfigurationError, match="kappa > 2"):
        NoiseSpec("gaussian", 1.0, kappa=2.0)
    with pytest.raises(ConfigurationError):
        NoiseSpec("student_t", 1.0, kappa=5.0, shape=5.0)
    NoiseSpec("student_t", 1.0, kappa=4.5, shape=5.0)


def test_noise_moment_bound(grid):
    assert NoiseSpec("student_t", 2.0, kappa=3, shape=5).moment_bound(grid) == pytest.approx(4 * 5 / 3)
    assert NoiseSpec("gaussian", lambda x: 1 + x, kappa=4).moment_bound(grid) == pytest.approx(4.0)


@pytest.mark.parametrize("kind,shape", [("student_t", 6.0), ("pareto", 6.0)])
def test_noise_variance_matches_unit_variance(kind, shape):
    spec = NoiseSpec(kind, 1.0, kappa=3.0, shape=shape)
    d = spec.sample(np.random.default_rng(3), np.zeros(400_000))
    assert d.var() == pytest.approx(spec.unit_variance, rel=0.1)


# --- samples ----------------------------------------------------------------


def test_zero_noise_sample(uniform):
    cfg = ModelConfig(sine(1.0), uniform, NoiseSpec("gaussian", 0.0), 200, seed=3)
    s = sample_regression(cfg)
    np.testing.assert_array_equal(s.d, 0.0)
    np.testing.assert_array_equal(s.y, sine(1.0)(s.x))


def test_sampling_deterministic(uniform):
    cfg = ModelConfig(sine(1.0), uniform, NoiseSpec("gaussian", 1.0), 500, seed=11)
    a, b = sample_regression(cfg), sample_regression(cfg)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()


def test_uniform_sampling_ks(uniform):
    n = 100_000
    crit = 1.63 / math.sqrt(n)
    passed = 0
    for seed in range(100):
        x = uniform.sample(np.random.default_rng(seed), n)
        passed += stats.kstest(x, "uniform").statistic <= crit
    assert passed >= 97


def test_sample_requires_consistent_noise():
    with pytest.raises(ConfigurationError):
        RegressionSample([0.1, 0.2], [1.0, 2.0], [1.0, 2.0], [0.0, 0.5])
    with pytest.raises(ConfigurationError):
        RegressionSample([0.1, 1.2], [1.0, 2.0])


def test_sample_csv_round_trip(tmp_path, uniform):
    cfg = ModelConfig(polynomial([1.0, -2.0, 0.5]), uniform, NoiseSpec("gaussian", 0.3), 50, seed=1)
    s = sample_regression(cfg)
    path = tmp_path / "s.csv"
    write_sample_csv(path, s)
    back = read_sample_csv(path)
    for name in ("x", "y", "f0", "d"):
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))
