"""A uniform confidence band.

The band is ``f^{nh} +- Q sqrt(L / (nh))`` with ``Q`` taken from a calibration
run on independent samples. Bandwidths outside the F-range are refused
because there the bias is of the same order as the band.
"""

import warnings

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, sample_regression, sine
from splinekern.core import ConfigurationError
from splinekern.experiments import band_coverage, bandwidth_interval, calibrate_band, confidence_band
from splinekern.spline import fit_spline

grid = make_grid(2000)
model = ModelConfig(sine(1.0), DesignDensity.uniform(grid), NoiseSpec("gaussian", 1.0), 5000)
m, h = 2, 0.05
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    print("F-range:", bandwidth_interval("F", model.n, kappa=4, m=m))

Q = calibrate_band(model, m, h, trials=500, seed=2024)
print(f"calibrated Q = {Q:.3f}")
print(f"coverage over 100 fresh samples: {band_coverage(model, m, h, Q, trials=100, seed=2024):.2f}")

sample = sample_regression(model, 5)
try:
    confidence_band(fit_spline(sample.x, sample.y, m, 0.3, grid), Q)
except ConfigurationError as exc:
    print("h=0.3 refused:", exc)
