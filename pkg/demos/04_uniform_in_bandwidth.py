"""Uniform-in-bandwidth statistics.

Each statistic is the largest ratio, over a grid of bandwidths, of a norm to
its predicted size. If the bounds hold uniformly in ``h`` these maxima stay
bounded as ``n`` grows.
"""

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, sine
from splinekern.experiments import StudyPlan, applicable_statistics, rate_statistic, run_study, trend_test

grid = make_grid(2000)
model = ModelConfig(sine(1.0), DesignDensity.uniform(grid), NoiseSpec("gaussian", 1.0), 500)

for kind in ("H", "G"):
    report = run_study(model, StudyPlan(2, kind, (500, 2000, 8000), replications=20, seed=11, h_count=8), threads=4)
    print(f"{kind}-range:")
    for name in applicable_statistics(kind):
        series = rate_statistic(report, name)
        trend = trend_test(series.n_values, series.maxima)
        values = ", ".join(f"{v:7.3f}" for v in series.maxima)
        print(f"  {name:<8} maxima [{values}]  growth {trend.growth:.2f}")
