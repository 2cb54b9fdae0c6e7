"""How well the empirical design approximates the design density.

The design defect ``r`` compares the discrete data norm with the continuous
weighted norm. Values close to one mean the random design behaves like its
density for the purposes of the spline.
"""

import numpy as np

from splinekern.core import DesignDensity, ModelConfig, NoiseSpec, make_grid, named_density, sine
from splinekern.estimators import defect_family, density_estimate, design_defect, diagnostics_sweep, expected_density

grid = make_grid(2000)
w = DesignDensity.uniform(grid)
family = defect_family(grid, 20)

for n in (1000, 5000, 20000):
    minima = [min(design_defect(f, np.random.default_rng(s).random(n), w, 2, 0.05) for f in family)
              for s in range(30)]
    print(f"n={n:>6}: median of min r over the family = {np.median(minima):.3f}")

x = np.random.default_rng(0).random(100_000)
dev = (density_estimate(x, 0.1, grid) - expected_density(w, 0.1)).sup_norm()
print(f"one-sided exponential density estimate, n=1e5, h=0.1: sup deviation {dev:.4f}")

tn = named_density(grid, "truncated_normal")
model = ModelConfig(sine(1.0), tn, NoiseSpec("gaussian", 1.0), 100)
for rec in diagnostics_sweep(model, 2, [2000, 8000], [0.05, 0.2], seed=3):
    print(f"n={rec.n:>5} h={rec.h:<5} zeta={rec.zeta:.3f} eta={rec.eta:.3f} r={rec.r:.3f}")
