"""Fitting a smoothing spline and splitting its error.

The error of the fit is the sum of a bias term, the C-spline sum
``(1/n) sum D_i R(X_i, .)`` and a remainder. The remainder should be much
smaller than the random sum it corrects.
"""

import numpy as np

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, sample_regression, sine
from splinekern.greens import greens_operator
from splinekern.spline import decompose, fit_spline

grid = make_grid(2000)
w = DesignDensity.uniform(grid)
model = ModelConfig(sine(1.0), w, NoiseSpec("gaussian", 1.0), n=4000, seed=1)
sample = sample_regression(model)

m = 2
h = (np.log(sample.n) / sample.n) ** (1 / (2 * m + 1))
fit = fit_spline(sample.x, sample.y, m, h, grid)
print(f"n={sample.n}, m={m}, h={h:.4f}")
print(f"objective {fit.objective:.6f} = data {fit.data_term:.6f} + penalty {fit.penalty:.6f}")

dec = decompose(sample, m, h, greens_operator(w, m, h), model.regression)
for key in ("error", "bias", "kernel_sum", "remainder"):
    print(f"  sup-norm of {key:<10} {dec.sup_norms[key]:.5f}")
print(f"remainder / kernel sum = {dec.sup_norms['remainder'] / dec.sup_norms['kernel_sum']:.3f}")
