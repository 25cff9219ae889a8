"""Bounded-memory weighted least squares via row-wise Givens rotations.

The only state retained while rows stream past is the p x p upper
triangle rbar and the p-vector bbar (plus two scalar diagnostics), so
memory use is a function of the column count alone. After absorbing a
weighted row set, rbar' rbar equals X' W X and rbar' bbar equals
X' W z, which is everything coefficient solves, leverages, and
covariance queries need.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .errors import RankError, ShapeError

RANK_TOL = 1e-10


@njit(cache=True)
def _givens_absorb(rbar, bbar, rows, rhs, weights):
    """Rotate each weighted row into (rbar, bbar); returns the residual ssq.

    Rows with nonpositive weight are skipped entirely, which avoids 0/0
    in the rotation construction. hypot keeps the diagonal nonnegative,
    so rbar is unique and runs are deterministic.
    """
    c, p = rows.shape
    ssq = 0.0
    for i in range(c):
        wi = weights[i]
        if wi <= 0.0:
            continue
        s = math.sqrt(wi)
        row = s * rows[i]
        b = s * rhs[i]
        for j in range(p):
            xj = row[j]
            if xj == 0.0:
                continue
            rjj = rbar[j, j]
            h = math.hypot(rjj, xj)
            if h == 0.0:
                continue
            cth = rjj / h
            sth = xj / h
            rbar[j, j] = h
            for k in range(j + 1, p):
                t1 = rbar[j, k]
                t2 = row[k]
                rbar[j, k] = cth * t1 + sth * t2
                row[k] = -sth * t1 + cth * t2
            t1 = bbar[j]
            bbar[j] = cth * t1 + sth * b
            b = -sth * t1 + cth * b
        ssq += b * b
    return ssq


class TriangularAccumulator:
    """Running triangular factor of a weighted row stream.

    Supports absorbing chunks of rows, solving for coefficients by
    back-substitution, leverage and covariance queries, and generic
    information-matrix solves. Single writer; read-only queries may run
    concurrently once absorption is done.
    """

    def __init__(self, p: int):
        if p < 1:
            raise ShapeError(f"column count must be positive, got {p}")
        self.p = p
        self.rbar = np.zeros((p, p))
        self.bbar = np.zeros(p)
        self.rows_seen = 0
        self.ssq_resid = 0.0

    def absorb_chunk(self, rows, rhs, weights) -> "TriangularAccumulator":
        """Absorb rows scaled by sqrt(weights) with right-hand side rhs."""
        rows = np.ascontiguousarray(rows, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != self.p:
            raise ShapeError(
                f"expected rows with {self.p} columns, got shape {rows.shape}"
            )
        if rhs.shape != (rows.shape[0],) or weights.shape != (rows.shape[0],):
            raise ShapeError(
                "rows, rhs and weights must agree on the row count: "
                f"{rows.shape[0]}, {rhs.shape}, {weights.shape}"
            )
        self.ssq_resid += _givens_absorb(self.rbar, self.bbar, rows, rhs, weights)
        self.rows_seen += rows.shape[0]
        return self

    def rank_ok(self, tol: float = RANK_TOL) -> bool:
        diag = np.abs(np.diag(self.rbar))
        return bool(diag.min() > tol * diag.max())

    def _require_rank(self):
        if not self.rank_ok():
            diag = np.abs(np.diag(self.rbar))
            raise RankError(int(np.argmin(diag)))

    def solve_coefficients(self) -> np.ndarray:
        """Back-substitute rbar psi = bbar for the least-squares solution."""
        self._require_rank()
        return solve_triangular(self.rbar, self.bbar, lower=False)

    def solve_information(self, s) -> np.ndarray:
        """Solve (X'WX) v = s through two triangular solves."""
        self._require_rank()
        u = solve_triangular(self.rbar, np.asarray(s, dtype=float),
                             trans="T", lower=False)
        return solve_triangular(self.rbar, u, lower=False)

    def leverage(self, x, w: float) -> float:
        """Hat-matrix diagonal w * x'(X'WX)^{-1}x for one candidate row."""
        self._require_rank()
        u = solve_triangular(self.rbar, np.asarray(x, dtype=float),
                             trans="T", lower=False)
        return float(w * (u @ u))

    def leverage_chunk(self, rows, weights) -> np.ndarray:
        """Vectorized leverage for a block of rows (one triangular solve)."""
        self._require_rank()
        rows = np.asarray(rows, dtype=float)
        weights = np.asarray(weights, dtype=float)
        u = solve_triangular(self.rbar, rows.T, trans="T", lower=False)
        return weights * np.einsum("ij,ij->j", u, u)

    def covariance_diagonal(self, phi: float) -> np.ndarray:
        """phi * diag((X'WX)^{-1}); square roots are the standard errors."""
        self._require_rank()
        rinv = solve_triangular(self.rbar, np.eye(self.p), lower=False)
        return phi * np.einsum("ij,ij->i", rinv, rinv)


def absorb_chunk(acc, rows, rhs, weights):
    return acc.absorb_chunk(rows, rhs, weights)


def solve_coefficients(acc):
    return acc.solve_coefficients()


def solve_information(acc, s):
    return acc.solve_information(s)


def leverage(acc, x, w):
    return acc.leverage(x, w)


def covariance_diagonal(acc, phi):
    return acc.covariance_diagonal(phi)


def rank_ok(acc):
    return acc.rank_ok()
