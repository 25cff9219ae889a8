"""Chunked iteratively reweighted least squares for GLMs.

Estimates coefficients by streaming fixed-size blocks through the
triangular accumulator. Three estimators are supported through the
adjustment switches (b1, b2): plain maximum likelihood (0, 0), mean
bias reduction (1, 0), and Jeffreys-prior penalized likelihood (1, 1).
The adjusted variants come in two flavors:

* two_pass: one pass builds the triangular factor at the current
  coefficients, a second pass projects the leverage adjustment through
  it, reproducing the exact adjusted update at the current iterate.
* one_pass: a single pass per iteration, using leverages lagged one
  iteration (from the previous factor and the previous weights); the
  first iteration uses the balanced-design value p/n.

Both variants share their stationary points with the adjusted score
equations; the one-pass flavor typically needs more iterations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chunks import Chunk
from .errors import (
    DegreesOfFreedomError,
    DivergenceError,
    NotApplicableError,
    ShapeError,
)
from .families import FamilyLink, a_derivatives, deviance_point, point_quantities
from .qr import TriangularAccumulator

# Abort threshold for runaway coefficients (maximum likelihood under
# separation grows without bound; surface that instead of overflowing).
DIVERGENCE_LIMIT = 1e8

ESTIMATOR_SWITCHES = {"ml": (0, 0), "mbr": (1, 0), "mjpl": (1, 1)}
DISPERSION_RULES = ("fixed", "moment", "ml_scoring", "mbr_scoring")
VARIANTS = ("one_pass", "two_pass")


@dataclass(frozen=True)
class WarmStart:
    """Pre-iterations of plain IWLS on shrunken responses (1-2*delta)*y + delta."""

    delta: float = 0.05
    iterations: int = 2


@dataclass
class FitConfig:
    estimator: str = "ml"
    variant: str = "two_pass"
    dispersion: str | None = None  # None resolves to fixed/moment per family
    epsilon: float = 1e-3
    max_iter: int = 250
    beta_start: np.ndarray | None = None
    warm_start: WarmStart | None = None

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_SWITCHES:
            raise ValueError(
                f"unknown estimator {self.estimator!r}; "
                f"choose from {sorted(ESTIMATOR_SWITCHES)}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.dispersion is not None and self.dispersion not in DISPERSION_RULES:
            raise ValueError(
                f"unknown dispersion rule {self.dispersion!r}; "
                f"choose from {DISPERSION_RULES}"
            )
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


class IterationRecord(NamedTuple):
    delta_beta: float
    phi: float
    seconds: float


@dataclass
class FitResult:
    beta: np.ndarray
    se: np.ndarray
    phi: float
    iterations: int
    converged: bool
    reason: str | None
    accumulator: TriangularAccumulator
    adjusted_score_norm: float
    per_iteration: list[IterationRecord]
    leverage_trace: list[float]
    n_obs: int


@dataclass
class IterationState:
    """Inputs one IWLS step needs beyond the data itself."""

    beta: np.ndarray
    phi: float = 1.0
    beta_previous: np.ndarray | None = None
    rbar_previous: TriangularAccumulator | None = None
    h_default: float | None = None  # p/n, used only before a factor exists


@dataclass
class _PassStats:
    """Sums accumulated while streaming one pass at fixed (beta, phi)."""

    n: int = 0
    pearson: float = 0.0  # sum w*(z - eta)^2
    dev_gap: float = 0.0  # sum (q - rho)
    s2: float = 0.0       # sum m^2 * a''
    s3: float = 0.0       # sum m^3 * a'''


def _accumulate(stats: _PassStats, chunk: Chunk, pq, eta, phi, fl,
                with_deviance: bool) -> None:
    stats.n += len(chunk)
    r = pq.z - eta
    stats.pearson += float(np.sum(pq.w * r * r))
    if with_deviance:
        dev = deviance_point(eta, chunk.y, chunk.m, phi, fl)
        stats.dev_gap += float(np.sum(dev.q - dev.rho))
        _, a2, a3 = a_derivatives(chunk.m, phi, fl)
        m2 = chunk.m * chunk.m
        stats.s2 += float(np.sum(m2 * a2))
        stats.s3 += float(np.sum(m2 * chunk.m * a3))


def _absorb_pass(beta, phi, source, fl, one_pass=None):
    """One streaming pass: absorb weighted rows, return (factor, stats).

    With ``one_pass=(b1, b2, prev_acc, beta_prev, h_default)`` the right-hand
    side carries the lagged-leverage adjustment z + phi*h*kappa.
    """
    acc = TriangularAccumulator(source.n_columns)
    stats = _PassStats()
    with_dev = not fl.dispersion_fixed
    for chunk in source.chunks():
        eta = chunk.x @ beta
        pq = point_quantities(eta, chunk.y, chunk.m, fl)
        rhs = pq.z
        if one_pass is not None:
            b1, b2, prev_acc, beta_prev, h_default = one_pass
            if prev_acc is None:
                h = h_default
            else:
                w_prev = point_quantities(chunk.x @ beta_prev, chunk.y,
                                          chunk.m, fl).w
                h = prev_acc.leverage_chunk(chunk.x, w_prev)
            kappa = b1 * pq.xi + b2 * pq.lam
            rhs = pq.z + phi * h * kappa
        acc.absorb_chunk(chunk.x, rhs, pq.w)
        _accumulate(stats, chunk, pq, eta, phi, fl, with_dev)
    return acc, stats


def _adjustment_pass(beta, phi, source, fl, acc, b1, b2):
    """Second pass of the two-pass variant: project the leverage adjustment.

    Returns (s, sum_h) with s = X'W(phi*H*kappa) accumulated chunkwise and
    sum_h the leverage trace (equals p when the factor matches the weights).
    """
    s = np.zeros(source.n_columns)
    sum_h = 0.0
    for chunk in source.chunks():
        eta = chunk.x @ beta
        pq = point_quantities(eta, chunk.y, chunk.m, fl)
        h = acc.leverage_chunk(chunk.x, pq.w)
        kappa = b1 * pq.xi + b2 * pq.lam
        s += chunk.x.T @ (pq.w * (phi * h * kappa))
        sum_h += float(np.sum(h))
    return s, sum_h


def ml_iteration(state: IterationState, source, fl: FamilyLink):
    """One plain IWLS step: absorb (sqrt(w)x, sqrt(w)z), back-substitute."""
    acc, _ = _absorb_pass(state.beta, state.phi, source, fl)
    return acc.solve_coefficients(), acc


def adjusted_iteration_two_pass(state: IterationState, source, fl: FamilyLink,
                                b1: float, b2: float):
    """One adjusted step evaluated fully at the current coefficients."""
    acc, _ = _absorb_pass(state.beta, state.phi, source, fl)
    beta_hat = acc.solve_coefficients()
    if not (b1 or b2):
        return beta_hat, acc
    s, _ = _adjustment_pass(state.beta, state.phi, source, fl, acc, b1, b2)
    return beta_hat + acc.solve_information(s), acc


def adjusted_iteration_one_pass(state: IterationState, source, fl: FamilyLink,
                                b1: float, b2: float):
    """One adjusted step with leverages lagged to the previous iteration."""
    if not (b1 or b2):
        return ml_iteration(state, source, fl)
    if state.rbar_previous is None and state.h_default is None:
        raise ValueError("one-pass iteration needs h_default before a factor exists")
    ctx = (b1, b2, state.rbar_previous, state.beta_previous, state.h_default)
    acc, _ = _absorb_pass(state.beta, state.phi, source, fl, one_pass=ctx)
    return acc.solve_coefficients(), acc


def _dispersion_step(rule: str, stats: _PassStats, phi: float, p: int) -> float:
    if rule == "fixed":
        return 1.0
    if rule == "moment":
        if stats.n <= p:
            raise DegreesOfFreedomError(
                f"moment dispersion needs n > p (n={stats.n}, p={p})"
            )
        return stats.pearson / (stats.n - p)
    # quasi-Fisher scoring; the c1 term is the bias-reducing adjustment
    c1 = 1.0 if rule == "mbr_scoring" else 0.0
    new = phi * (1.0 + phi * stats.dev_gap / stats.s2)
    if c1:
        new += phi * phi * (stats.s3 / stats.s2 ** 2 + phi * (p - 2) / stats.s2)
    return new


def _stats_pass(beta, phi, source, fl, with_deviance) -> _PassStats:
    stats = _PassStats()
    for chunk in source.chunks():
        eta = chunk.x @ beta
        pq = point_quantities(eta, chunk.y, chunk.m, fl)
        _accumulate(stats, chunk, pq, eta, phi, fl, with_deviance)
    return stats


def update_phi_moment(beta, p: int, source, fl: FamilyLink) -> float:
    """Moment dispersion sum w*(z - eta)^2 / (n - p), accumulated chunkwise."""
    stats = _stats_pass(beta, 1.0, source, fl, with_deviance=False)
    if stats.n <= p:
        raise DegreesOfFreedomError(
            f"moment dispersion needs n > p (n={stats.n}, p={p})"
        )
    return stats.pearson / (stats.n - p)


def update_phi_scoring(beta_hat, phi: float, c1: int, p: int, source,
                       fl: FamilyLink) -> float:
    """One quasi-Fisher scoring step for the dispersion; c1=0 is plain ML."""
    if fl.dispersion_fixed:
        raise NotApplicableError(
            f"dispersion is fixed at 1 for the {fl.family} family"
        )
    stats = _stats_pass(beta_hat, phi, source, fl, with_deviance=True)
    return _dispersion_step("mbr_scoring" if c1 else "ml_scoring", stats, phi, p)


class _ShiftedResponses:
    """Source view with responses mapped to (1 - 2*delta)*y + delta."""

    def __init__(self, inner, delta: float):
        self._inner = inner
        self._delta = delta
        self.n_columns = inner.n_columns

    def chunks(self):
        d = self._delta
        for chunk in self._inner.chunks():
            yield Chunk(x=chunk.x, y=(1.0 - 2.0 * d) * chunk.y + d,
                        m=chunk.m, row_offset=chunk.row_offset)


def _warm_start_beta(ws: WarmStart, source, fl: FamilyLink, p: int) -> np.ndarray:
    if fl.family != "binomial":
        raise ValueError("warm start shrinks binomial responses; "
                         f"not defined for family {fl.family!r}")
    shifted = _ShiftedResponses(source, ws.delta)
    beta = np.zeros(p)
    for _ in range(ws.iterations):
        acc, _ = _absorb_pass(beta, 1.0, shifted, fl)
        beta = acc.solve_coefficients()
    return beta


def _check_divergence(beta: np.ndarray) -> None:
    finite = np.isfinite(beta)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise DivergenceError(idx, float(beta[idx]))
    idx = int(np.argmax(np.abs(beta)))
    if abs(beta[idx]) > DIVERGENCE_LIMIT:
        raise DivergenceError(idx, float(beta[idx]))


def _final_evaluation(beta, phi, source, fl, b1, b2):
    """Rebuild the factor at the solution and evaluate the adjusted score."""
    acc = TriangularAccumulator(source.n_columns)
    s_ml = np.zeros(source.n_columns)
    for chunk in source.chunks():
        eta = chunk.x @ beta
        pq = point_quantities(eta, chunk.y, chunk.m, fl)
        acc.absorb_chunk(chunk.x, pq.z, pq.w)
        s_ml += chunk.x.T @ (pq.w * (pq.z - eta))
    score = s_ml / phi
    if b1 or b2:
        for chunk in source.chunks():
            eta = chunk.x @ beta
            pq = point_quantities(eta, chunk.y, chunk.m, fl)
            h = acc.leverage_chunk(chunk.x, pq.w)
            kappa = b1 * pq.xi + b2 * pq.lam
            score += chunk.x.T @ (pq.w * (h * kappa))
    return acc, float(np.max(np.abs(score)))


def standard_errors(acc: TriangularAccumulator, phi: float) -> np.ndarray:
    """Square roots of the inverse-information diagonal, scaled by phi."""
    return np.sqrt(acc.covariance_diagonal(phi))


def fit(config: FitConfig, source, fl: FamilyLink) -> FitResult:
    """Alternate coefficient and dispersion updates until both stabilize.

    The dispersion update is evaluated at the iterate the pass was run at,
    so the moment rule costs no extra pass. Convergence requires the
    sup-norm change of both the coefficients and (when free) the
    dispersion to drop below ``config.epsilon``.
    """
    rule = config.dispersion
    if rule is None:
        rule = "fixed" if fl.dispersion_fixed else "moment"
    elif fl.dispersion_fixed and rule != "fixed":
        raise ValueError(
            f"the {fl.family} family requires dispersion='fixed' (got {rule!r})"
        )
    b1, b2 = ESTIMATOR_SWITCHES[config.estimator]
    adjusted = bool(b1 or b2)
    p = source.n_columns

    if config.beta_start is not None:
        beta = np.asarray(config.beta_start, dtype=float)
        if beta.shape != (p,):
            raise ShapeError(
                f"beta_start must have shape ({p},), got {beta.shape}"
            )
        beta = beta.copy()
    else:
        beta = np.zeros(p)
    if config.warm_start is not None:
        beta = _warm_start_beta(config.warm_start, source, fl, p)

    h_default = None
    if adjusted and config.variant == "one_pass":
        h_default = p / source.count_rows()

    phi = 1.0
    prev_acc = None
    beta_prev = None
    records: list[IterationRecord] = []
    leverage_trace: list[float] = []
    converged = False
    delta_beta = np.inf

    for _ in range(config.max_iter):
        t0 = time.perf_counter()
        if not adjusted:
            acc, stats = _absorb_pass(beta, phi, source, fl)
            beta_new = acc.solve_coefficients()
        elif config.variant == "two_pass":
            acc, stats = _absorb_pass(beta, phi, source, fl)
            beta_hat = acc.solve_coefficients()
            s, sum_h = _adjustment_pass(beta, phi, source, fl, acc, b1, b2)
            beta_new = beta_hat + acc.solve_information(s)
            leverage_trace.append(sum_h)
        else:
            ctx = (b1, b2, prev_acc, beta_prev, h_default)
            acc, stats = _absorb_pass(beta, phi, source, fl, one_pass=ctx)
            beta_new = acc.solve_coefficients()
        _check_divergence(beta_new)
        phi_new = _dispersion_step(rule, stats, phi, p)
        delta_beta = float(np.max(np.abs(beta_new - beta)))
        delta_phi = 0.0 if rule == "fixed" else abs(phi_new - phi)
        records.append(IterationRecord(delta_beta, phi_new,
                                       time.perf_counter() - t0))
        prev_acc, beta_prev = acc, beta
        beta, phi = beta_new, phi_new
        if delta_beta < config.epsilon and delta_phi < config.epsilon:
            converged = True
            break

    reason = None
    if not converged:
        reason = (f"no convergence within {config.max_iter} iterations "
                  f"(last coefficient change {delta_beta:.3e})")

    final_acc, score_norm = _final_evaluation(beta, phi, source, fl, b1, b2)
    se = standard_errors(final_acc, phi)
    return FitResult(
        beta=beta,
        se=se,
        phi=phi,
        iterations=len(records),
        converged=converged,
        reason=reason,
        accumulator=final_acc,
        adjusted_score_norm=score_norm,
        per_iteration=records,
        leverage_trace=leverage_trace,
        n_obs=final_acc.rows_seen,
    )
