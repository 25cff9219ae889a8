"""High-dimensional logistic simulation harness with signal-recovery rescaling.

Generates designs with i.i.d. standard normal entries at a chosen
dimension ratio kappa = p/n and signal strength gamma, fits the
Jeffreys-penalized estimator with the two-pass chunked engine, and
summarizes how well a simple linear regression of the estimates on the
truth recovers slope one. In the regime where maximum likelihood
estimates stop existing, the estimator is rescaled post fit by
kappa*gamma/sqrt(1 - rho^2); whether that regime applies is an input
flag per grid point, not something this module computes.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .chunks import array_source
from .errors import ChunkGlmError, DegenerateRegressorError, ParseError
from .families import FamilyLink
from .fitter import FitConfig, fit

BETA_SHAPES = ("equispaced", "sparse")


@dataclass(frozen=True)
class SimSetting:
    """One grid point of the experiment.

    ``mle_exists`` is supplied by the caller (read off the phase-transition
    regions); it only controls the post-fit rescaling factor.
    """

    kappa: float
    n: int
    rho2: float
    gamma: float
    beta_star_shape: str = "equispaced"
    reps: int = 5
    seed: int = 0
    mle_exists: bool = False

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if not 0 <= self.rho2 < 1:
            raise ValueError("rho2 must lie in [0, 1)")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.beta_star_shape not in BETA_SHAPES:
            raise ValueError(
                f"unknown beta_star_shape {self.beta_star_shape!r}; "
                f"choose from {BETA_SHAPES}"
            )
        if self.reps < 1:
            raise ValueError("reps must be at least 1")

    @property
    def p(self) -> int:
        return math.ceil(self.n * self.kappa)

    @property
    def rho(self) -> float:
        return math.sqrt(self.rho2)

    @property
    def alpha(self) -> float:
        return self.rho * self.gamma

    @property
    def gamma0(self) -> float:
        return self.gamma * math.sqrt(1.0 - self.rho2)


def target_beta(setting: SimSetting) -> np.ndarray:
    """The true coefficient vector, rescaled so its 2-norm equals gamma0."""
    p = setting.p
    if setting.beta_star_shape == "equispaced":
        star = np.linspace(-10.0, 10.0, p)
    else:
        star = np.zeros(p)
        k = p // 5  # 20% at each extreme, the rest zero
        star[:k] = -10.0
        star[p - k:] = 10.0
    norm = np.linalg.norm(star)
    if norm == 0.0:
        raise ValueError(f"degenerate truth vector for p={p}")
    return setting.gamma0 * star / norm


def generate(setting: SimSetting, rep_index: int):
    """Draw (X, y) for one replicate; returns (X, y, alpha, beta).

    The generator stream is derived from (seed, rep_index) alone, so
    replicates are independent and reproducible regardless of how they
    are scheduled across workers.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=setting.seed, spawn_key=(rep_index,))
    )
    beta = target_beta(setting)
    x = rng.standard_normal((setting.n, setting.p))
    eta = setting.alpha + x @ beta
    prob = 1.0 / (1.0 + np.exp(-eta))
    y = rng.binomial(1, prob).astype(float)
    return x, y, setting.alpha, beta


def rescale_estimate(beta_tilde, kappa: float, gamma: float, rho: float,
                     mle_exists: bool) -> np.ndarray:
    """Post-fit rescaling: identity where ML exists, kappa*gamma/sqrt(1-rho^2) where not."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    if not rho * rho < 1:
        raise ValueError("rho^2 must be below 1")
    beta_tilde = np.asarray(beta_tilde, dtype=float)
    if mle_exists:
        return beta_tilde.copy()
    return (kappa * gamma / math.sqrt(1.0 - rho * rho)) * beta_tilde


def recovery_slope(estimates, truth) -> float:
    """Slope of the simple (with-intercept) regression of estimates on truth."""
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if truth.shape != estimates.shape or truth.size < 2:
        raise ValueError("estimates and truth must be equal-length vectors, length >= 2")
    t_center = truth - truth.mean()
    var = float(t_center @ t_center)
    if var == 0.0:
        raise DegenerateRegressorError("truth vector is constant")
    return float(t_center @ (estimates - estimates.mean()) / var)


@dataclass
class RepResult:
    """Raw outcome of fitting one replicate."""

    rep: int
    converged: bool
    iterations: int
    seconds: float
    slope: float
    slope_adjusted: float
    intercept_estimate: float
    estimates: np.ndarray
    truth: np.ndarray
    slope_ml: float | None = None
    error: str | None = None


@dataclass
class SimSummary:
    kappa: float
    n: int
    p: int
    rho2: float
    gamma: float
    beta_star_shape: str
    reps: int
    seed: int
    mle_exists: bool
    slope: float
    slope_adjusted: float
    rep_slopes: list[float]
    rep_slopes_adjusted: list[float]
    rep_iterations: list[int]
    iterations_min: int
    iterations_mean: float
    iterations_max: int
    time_mean: float
    converged_count: int
    rep_slopes_ml: list[float] | None = None
    rep_errors: list[str] | None = None


def _fit_one(setting: SimSetting, rep: int, chunk_size: int, epsilon: float,
             max_iter: int, fit_ml: bool = False) -> RepResult:
    x, y, _, beta = generate(setting, rep)
    source = array_source(x, y, chunk_size=chunk_size, intercept=True)
    fl = FamilyLink("binomial", "logit")
    config = FitConfig(estimator="mjpl", variant="two_pass",
                       epsilon=epsilon, max_iter=max_iter)
    t0 = time.perf_counter()
    try:
        result = fit(config, source, fl)
    except ChunkGlmError as exc:
        # a failed replicate is recorded, not fatal for the grid
        return RepResult(rep=rep, converged=False, iterations=0,
                         seconds=time.perf_counter() - t0, slope=np.nan,
                         slope_adjusted=np.nan, intercept_estimate=np.nan,
                         estimates=np.full(setting.p, np.nan), truth=beta,
                         error=f"{type(exc).__name__}: {exc}")
    seconds = time.perf_counter() - t0
    estimates = result.beta[1:]
    adjusted = rescale_estimate(estimates, setting.kappa, setting.gamma,
                                setting.rho, setting.mle_exists)
    slope_ml = None
    if fit_ml and setting.mle_exists:
        # comparison fit, started at the penalized estimates
        ml = fit(FitConfig(estimator="ml", epsilon=epsilon, max_iter=max_iter,
                           beta_start=result.beta), source, fl)
        slope_ml = recovery_slope(ml.beta[1:], beta)
    return RepResult(
        rep=rep,
        converged=result.converged,
        iterations=result.iterations,
        seconds=seconds,
        slope=recovery_slope(estimates, beta),
        slope_adjusted=recovery_slope(adjusted, beta),
        intercept_estimate=float(result.beta[0]),
        estimates=estimates,
        truth=beta,
        slope_ml=slope_ml,
    )


def run_setting(setting: SimSetting, chunk_size: int = 1000,
                epsilon: float = 1e-3, max_iter: int = 250,
                workers: int = 1, dump_dir=None,
                fit_ml: bool = False) -> SimSummary:
    """Fit every replicate of one grid point and aggregate the outcomes.

    With ``fit_ml`` the plain maximum-likelihood estimator is also fit on
    grid points where it exists, for side-by-side slope comparisons.
    """
    jobs = list(range(setting.reps))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                _fit_one, [setting] * len(jobs), jobs,
                [chunk_size] * len(jobs), [epsilon] * len(jobs),
                [max_iter] * len(jobs), [fit_ml] * len(jobs),
            ))
    else:
        results = [_fit_one(setting, r, chunk_size, epsilon, max_iter, fit_ml)
                   for r in jobs]
    results.sort(key=lambda r: r.rep)

    if dump_dir is not None:
        _dump_estimates(dump_dir, setting, results)

    succeeded = [r for r in results if r.error is None]
    if succeeded:
        pooled_est = np.concatenate([r.estimates for r in succeeded])
        pooled_truth = np.concatenate([r.truth for r in succeeded])
        pooled_adj = rescale_estimate(pooled_est, setting.kappa, setting.gamma,
                                      setting.rho, setting.mle_exists)
        slope = recovery_slope(pooled_est, pooled_truth)
        slope_adjusted = recovery_slope(pooled_adj, pooled_truth)
        iters = [r.iterations for r in succeeded]
    else:
        slope = slope_adjusted = float("nan")
        iters = [0]
    slopes_ml = None
    if fit_ml and setting.mle_exists:
        slopes_ml = [r.slope_ml for r in results]
    errors = [r.error for r in results if r.error is not None]
    return SimSummary(
        kappa=setting.kappa,
        n=setting.n,
        p=setting.p,
        rho2=setting.rho2,
        gamma=setting.gamma,
        beta_star_shape=setting.beta_star_shape,
        reps=setting.reps,
        seed=setting.seed,
        mle_exists=setting.mle_exists,
        slope=slope,
        slope_adjusted=slope_adjusted,
        rep_slopes=[r.slope for r in results],
        rep_slopes_adjusted=[r.slope_adjusted for r in results],
        rep_iterations=[r.iterations for r in results],
        iterations_min=min(iters),
        iterations_mean=float(np.mean(iters)),
        iterations_max=max(iters),
        time_mean=float(np.mean([r.seconds for r in results])),
        converged_count=sum(r.converged for r in results),
        rep_slopes_ml=slopes_ml,
        rep_errors=errors or None,
    )


def run_grid(settings, chunk_size: int = 1000, epsilon: float = 1e-3,
             max_iter: int = 250, workers: int = 1, dump_dir=None,
             fit_ml: bool = False) -> list[SimSummary]:
    """Run every grid point in order; failed replicates are recorded
    on the summary (``rep_errors``) rather than aborting the grid."""
    return [run_setting(s, chunk_size=chunk_size, epsilon=epsilon,
                        max_iter=max_iter, workers=workers, dump_dir=dump_dir,
                        fit_ml=fit_ml)
            for s in settings]


def _dump_estimates(dump_dir, setting: SimSetting, results) -> None:
    from pathlib import Path

    out = Path(dump_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = (f"kappa{setting.kappa:g}_gamma{setting.gamma:g}"
           f"_rho2{setting.rho2:g}_n{setting.n}")
    for r in results:
        adjusted = rescale_estimate(r.estimates, setting.kappa, setting.gamma,
                                    setting.rho, setting.mle_exists)
        with open(out / f"{tag}_rep{r.rep}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index", "truth", "estimate", "estimate_rescaled"])
            for i in range(r.truth.size):
                writer.writerow([i, repr(float(r.truth[i])),
                                 repr(float(r.estimates[i])),
                                 repr(float(adjusted[i]))])


_GRID_COLUMNS = ("kappa", "n", "rho2", "gamma", "shape", "reps", "seed",
                 "mle_exists")


def read_grid(path) -> list[SimSetting]:
    """Parse a grid CSV (one setting per record)."""
    settings = []
    with open(path, "r", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(1, "<header>", "grid file is empty")
        missing = [c for c in _GRID_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ParseError(1, ",".join(missing),
                             f"grid header is missing columns {missing}")
        for record, row in enumerate(reader, start=1):
            try:
                settings.append(SimSetting(
                    kappa=float(row["kappa"]),
                    n=int(row["n"]),
                    rho2=float(row["rho2"]),
                    gamma=float(row["gamma"]),
                    beta_star_shape=row["shape"].strip(),
                    reps=int(row["reps"]),
                    seed=int(row["seed"]),
                    mle_exists=_parse_flag(row["mle_exists"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(record, "<record>",
                                 f"grid record {record} is invalid: {exc}") from exc
    if not settings:
        raise ParseError(0, "<grid>", "grid file contains no settings")
    return settings


def _parse_flag(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes"):
        return True
    if value in ("0", "false", "no"):
        return False
    raise ValueError(f"cannot parse flag {text!r}")


# wall time stays out of the written summaries so that reruns with the
# same seeds produce byte-identical files; it remains on SimSummary and
# in the command-line report
_SUMMARY_COLUMNS = (
    "kappa", "n", "p", "rho2", "gamma", "beta_star_shape", "reps", "seed",
    "mle_exists", "slope", "slope_adjusted", "iterations_min",
    "iterations_mean", "iterations_max", "converged_count",
)


def write_summary_csv(path, summaries) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_COLUMNS)
        for s in summaries:
            d = asdict(s)
            writer.writerow([d[c] for c in _SUMMARY_COLUMNS])


def write_summary_json(path, summaries) -> None:
    payload = []
    for s in summaries:
        d = asdict(s)
        d.pop("time_mean")
        payload.append(d)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
