"""Banded linear algebra shared by the kernel and spline solvers.

All smoothing problems here have normal equations of the form

    (B + lam * D^T D) u = b,

with ``D`` the m-th forward difference matrix, ``lam = h^{2m} delta^{1-2m}``
and ``B`` a banded positive semidefinite "data" matrix. For large ``lam`` the
spectrum of ``D^T D`` spans ``N^{2m}`` and Cholesky on the normal equations
loses every digit, so the system is solved in augmented form

    [ B          sqrt(lam) D^T ] [u]   [b]
    [ sqrt(lam) D     -I       ] [y] = [0]

with the auxiliary unknowns interleaved so the matrix stays banded. The
banded LU factorization (LAPACK gbtrf) is computed once and reused for any
number of right-hand sides.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np
from scipy import sparse
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .core import ConfigurationError, Grid


@lru_cache(maxsize=None)
def difference_stencil(m: int) -> np.ndarray:
    return np.array([(-1) ** (m - a) * comb(m, a) for a in range(m + 1)], dtype=float)


def difference_matrix(size: int, m: int) -> sparse.csr_matrix:
    """Unscaled m-th forward difference, shape ``(size - m, size)``."""
    return sparse.diags(
        difference_stencil(m), list(range(m + 1)), shape=(size - m, size), format="csr"
    )


def penalty_weight(grid: Grid, m: int, h: float) -> float:
    """Scale turning ``||D u||^2`` into ``h^{2m} * int (u^(m))^2``."""
    return h ** (2 * m) * grid.spacing ** (1 - 2 * m)


def discrete_energy(values: np.ndarray, grid: Grid, m: int) -> float:
    """``int (u^(m))^2`` as seen by the solvers: ``delta * sum (Delta^m u / delta^m)^2``."""
    d = np.diff(values, n=m) / grid.spacing**m
    return float(grid.spacing * np.dot(d, d))


def mass_matrix(grid: Grid, w: np.ndarray) -> sparse.csr_matrix:
    """Galerkin mass matrix of ``int w u v`` for piecewise-linear ``u, v, w``.

    The diagonal is shifted by an O(delta^2) amount so that row sums equal the
    trapezoid weights times ``w``; the discrete kernel then integrates to one
    against ``w`` exactly.
    """
    d = grid.spacing
    wa, wb = w[:-1], w[1:]
    diag = np.zeros(grid.size)
    diag[:-1] += d * (3 * wa + wb) / 12
    diag[1:] += d * (wa + 3 * wb) / 12
    off = d * (wa + wb) / 12
    rowsum = diag.copy()
    rowsum[:-1] += off
    rowsum[1:] += off
    diag += grid.weights * w - rowsum
    return sparse.diags([off, diag, off], [-1, 0, 1], format="csr")


class AugmentedSystem:
    """Factor ``B + lam * D^T D`` once; solve for many right-hand sides."""

    def __init__(self, data_matrix, m: int, lam: float):
        B = sparse.coo_matrix(data_matrix)
        size = B.shape[0]
        if size <= m:
            raise ConfigurationError("system smaller than the penalty order")
        self.size = size
        self.m = m
        rows = size - m
        iu = np.arange(size)
        self._pos_u = iu + np.maximum(0, iu - m)
        r = np.arange(rows)
        pos_y = 2 * r + m + 1
        total = size + rows
        c = difference_stencil(m) * np.sqrt(lam)

        I = [self._pos_u[B.row]]
        J = [self._pos_u[B.col]]
        V = [B.data]
        for a in range(m + 1):
            I += [pos_y, self._pos_u[r + a]]
            J += [self._pos_u[r + a], pos_y]
            V += [np.full(rows, c[a])] * 2
        I.append(pos_y)
        J.append(pos_y)
        V.append(-np.ones(rows))
        I = np.concatenate(I)
        J = np.concatenate(J)
        V = np.concatenate(V)

        self.kl = self.ku = int(np.max(np.abs(I - J)))
        ab = np.zeros((2 * self.kl + self.ku + 1, total))
        np.add.at(ab, (self.kl + self.ku + I - J, J), V)
        lu, piv, info = dgbtrf(ab, self.kl, self.ku)
        if info != 0:
            raise np.linalg.LinAlgError(f"augmented system is singular (gbtrf info={info})")
        self._lu, self._piv = lu, piv
        self._total = total

    @property
    def bandwidth(self) -> int:
        return self.kl

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        full = np.zeros((self._total,) + rhs.shape[1:])
        full[self._pos_u] = rhs
        x, info = dgbtrs(self._lu, self.kl, self.ku, full, self._piv)
        if info != 0:
            raise np.linalg.LinAlgError(f"gbtrs failed with info={info}")
        return x[self._pos_u]


def polynomial_basis(x: np.ndarray, degree_count: int) -> np.ndarray:
    """Legendre polynomials of degree < ``degree_count`` on [0, 1], columns."""
    return np.polynomial.legendre.legvander(2 * np.asarray(x) - 1, degree_count - 1)
