"""Convergence rate of the spline at the rate-optimal bandwidth.

With ``h = (log n / n)^{1/(2m+1)}`` the weighted Sobolev error should shrink
like ``(log n / n)^{m/(2m+1)}``. A small Monte Carlo study estimates the
exponent by regressing log median errors on ``log(log n / n)``.
"""

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, sine
from splinekern.experiments import StudyPlan, rate_regression, remainder_scaling, run_study

grid = make_grid(2000)
model = ModelConfig(sine(1.0), DesignDensity.uniform(grid), NoiseSpec("gaussian", 1.0), 500)

for m in (1, 2):
    report = run_study(model, StudyPlan(m, "R", (500, 2000, 8000), replications=30, seed=7), threads=4)
    est = rate_regression(report, "err_wmh", n_boot=500)
    print(f"m={m}: slope {est.slope:.3f}, 90% interval [{est.lower:.3f}, {est.upper:.3f}], "
          f"target {m / (2 * m + 1):.3f}")
    scaling = remainder_scaling(report)
    print(f"     remainder slope {scaling['eps']:.2f} vs kernel-sum slope {scaling['psi']:.2f}; "
          f"better h-exponent: {scaling['better_exponent']}")
