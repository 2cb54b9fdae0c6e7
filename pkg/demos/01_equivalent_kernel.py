"""The reproducing kernel of the weighted Sobolev norm.

For ``m = 1`` and a uniform design the kernel has a closed form in terms of
hyperbolic cosines. We compute it on the grid, compare with the formula and
look at how it behaves like a convolution kernel of width ``h``.
"""

import numpy as np

from splinekern.core import DesignDensity, make_grid
from splinekern.greens import convolution_like_diagnostics, greens_operator, kernel_derivative

grid = make_grid(2000)
w = DesignDensity.uniform(grid)
t = grid.nodes

for h in (0.05, 0.1, 0.2):
    K = greens_operator(w, 1, h)
    lo, hi = np.minimum.outer(t, t), np.maximum.outer(t, t)
    exact = np.cosh(lo / h) * np.cosh((1 - hi) / h) / (h * np.sinh(1 / h))
    print(f"h={h:<5} max |K - closed form| = {np.abs(K.matrix - exact).max():.2e}"
          f"   peak R(1/2, 1/2) = {K.matrix[1000, 1000]:.4f}")

# higher order kernels, and their derivatives, still look like h^-1 g(|t-s|/h)
for m in (2, 3):
    K = greens_operator(w, m, 0.1)
    print(f"m={m}: asymmetry {K.relative_asymmetry():.1e}, row integral defect {K.row_integral_defect():.1e}")
    for order in range(m + 1):
        d = convolution_like_diagnostics(kernel_derivative(K, order))
        print(f"   derivative {order}: h^order * (L1, h*sup, BV) = "
              f"({d.l1:.3f}, {d.sup:.3f}, {d.bv:.3f})")
