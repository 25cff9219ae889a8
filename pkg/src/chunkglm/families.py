"""Pointwise exponential-family and link-function mathematics.

Everything here depends on one observation at a time: means, link
derivatives, variance functions, working weights/variates, the score
adjustment terms, deviance residuals, and the derivatives of the
dispersion normalizer a(.). All functions accept scalars or numpy
arrays and are pure, so they are safe to call from any worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit, ndtr, ndtri, polygamma, xlogy

from .errors import NotApplicableError

# Means are kept this far from the boundary of the mean space so that
# working weights and variates stay finite under extreme linear predictors.
MU_EPS = 1e-12

_LOG_MU_EPS = np.log(MU_EPS)  # ~ -27.631
_LOGIT_ETA_MAX = np.log((1.0 - MU_EPS) / MU_EPS)
_PROBIT_ETA_MAX = float(ndtri(1.0 - MU_EPS))
_CLOGLOG_ETA_MAX = np.log(-np.log(MU_EPS))
# keeps mu^3 (the worst power entering the adjustment terms) finite;
# the fitter's divergence guard fires long before this bites
_LOG_ETA_MAX = 230.0
_INV_2PI_SQRT = 1.0 / np.sqrt(2.0 * np.pi)


class _Link:
    """A link g with clipped inverse evaluation.

    ``raw(eta)`` returns (mu, d, dprime) where d = dmu/deta and
    dprime = d2mu/deta2, all evaluated at eta clipped to the range that
    keeps mu inside the clamped mean space. Evaluating the derivatives
    at the clipped eta keeps (mu, d, dprime) mutually consistent.
    """

    name: str = ""

    def clip(self, eta):
        return eta

    def raw(self, eta):
        raise NotImplementedError


class _Logit(_Link):
    name = "logit"

    def clip(self, eta):
        return np.clip(eta, -_LOGIT_ETA_MAX, _LOGIT_ETA_MAX)

    def raw(self, eta):
        eta = self.clip(eta)
        mu = expit(eta)
        d = mu * (1.0 - mu)
        dprime = d * (1.0 - 2.0 * mu)
        return mu, d, dprime


class _Probit(_Link):
    name = "probit"

    def clip(self, eta):
        return np.clip(eta, -_PROBIT_ETA_MAX, _PROBIT_ETA_MAX)

    def raw(self, eta):
        eta = self.clip(eta)
        mu = ndtr(eta)
        d = _INV_2PI_SQRT * np.exp(-0.5 * eta * eta)
        dprime = -eta * d
        return mu, d, dprime


class _CLogLog(_Link):
    name = "cloglog"

    def clip(self, eta):
        return np.clip(eta, _LOG_MU_EPS, _CLOGLOG_ETA_MAX)

    def raw(self, eta):
        eta = self.clip(eta)
        e = np.exp(eta)
        mu = -np.expm1(-e)
        # d = exp(eta - e) evaluated in log space to survive eta << 0
        d = np.exp(eta - e)
        dprime = d * (1.0 - e)
        return mu, d, dprime


class _Identity(_Link):
    name = "identity"

    def raw(self, eta):
        eta = np.asarray(eta, dtype=float)
        one = np.ones_like(eta)
        return eta, one, np.zeros_like(eta)


class _Log(_Link):
    name = "log"

    def clip(self, eta):
        return np.clip(eta, _LOG_MU_EPS, _LOG_ETA_MAX)

    def raw(self, eta):
        eta = self.clip(eta)
        mu = np.exp(eta)
        return mu, mu, mu


class _Inverse(_Link):
    name = "inverse"

    def clip(self, eta):
        return np.clip(eta, MU_EPS, 1.0 / MU_EPS)

    def raw(self, eta):
        eta = self.clip(eta)
        mu = 1.0 / eta
        d = -(mu * mu)
        dprime = 2.0 * mu ** 3
        return mu, d, dprime


class _Family:
    name: str = ""
    dispersion_fixed: bool = True
    links: tuple[str, ...] = ()
    # boundary of the mean space; None means unbounded above
    mu_low: float = MU_EPS
    mu_high: float | None = None

    def variance(self, mu):
        raise NotImplementedError

    def dvariance(self, mu):
        """dV/dmu."""
        raise NotImplementedError

    def theta(self, mu):
        """Canonical parameter as a function of the mean."""
        raise NotImplementedError

    def cumulant(self, mu):
        """b(theta(mu))."""
        raise NotImplementedError

    def c1(self, y):
        """Normalizing term paired with the deviance residual."""
        raise NotImplementedError

    def a_derivatives(self, m, phi):
        raise NotApplicableError(
            f"dispersion is fixed at 1 for the {self.name} family"
        )


class _Binomial(_Family):
    name = "binomial"
    dispersion_fixed = True
    links = ("logit", "probit", "cloglog")
    mu_high = 1.0 - MU_EPS

    def variance(self, mu):
        return mu * (1.0 - mu)

    def dvariance(self, mu):
        return 1.0 - 2.0 * mu

    def theta(self, mu):
        return np.log(mu) - np.log1p(-mu)

    def cumulant(self, mu):
        return -np.log1p(-mu)

    def c1(self, y):
        return xlogy(y, y) + xlogy(1.0 - y, 1.0 - y)


class _Poisson(_Family):
    name = "poisson"
    dispersion_fixed = True
    links = ("log",)

    def variance(self, mu):
        return np.asarray(mu, dtype=float)

    def dvariance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def theta(self, mu):
        return np.log(mu)

    def cumulant(self, mu):
        return np.asarray(mu, dtype=float)

    def c1(self, y):
        return xlogy(y, y) - y


class _Gaussian(_Family):
    name = "gaussian"
    dispersion_fixed = False
    links = ("identity",)
    mu_low = -np.inf

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def dvariance(self, mu):
        return np.zeros_like(np.asarray(mu, dtype=float))

    def theta(self, mu):
        return np.asarray(mu, dtype=float)

    def cumulant(self, mu):
        mu = np.asarray(mu, dtype=float)
        return 0.5 * mu * mu

    def c1(self, y):
        y = np.asarray(y, dtype=float)
        return 0.5 * y * y

    def a_derivatives(self, m, phi):
        # a(u) = log(2*pi) - log(-u) at u = -m/phi
        r = phi / np.asarray(m, dtype=float)
        return r, r * r, 2.0 * r ** 3


class _Gamma(_Family):
    name = "gamma"
    dispersion_fixed = False
    links = ("log", "inverse")

    def variance(self, mu):
        return mu * mu

    def dvariance(self, mu):
        return 2.0 * mu

    def theta(self, mu):
        return -1.0 / mu

    def cumulant(self, mu):
        return np.log(mu)

    def c1(self, y):
        return -np.log(y)

    def a_derivatives(self, m, phi):
        # a(u) = 2*[lgamma(-u) + u*log(-u)] at u = -m/phi, via polygammas
        s = np.asarray(m, dtype=float) / phi
        aprime = 2.0 * (np.log(s) + 1.0 - digamma(s))
        adprime = 2.0 * (polygamma(1, s) - 1.0 / s)
        atprime = -2.0 * (polygamma(2, s) + 1.0 / (s * s))
        return aprime, adprime, atprime


_FAMILIES = {f.name: f for f in (_Binomial(), _Poisson(), _Gaussian(), _Gamma())}
_LINKS = {
    l.name: l
    for l in (_Logit(), _Probit(), _CLogLog(), _Identity(), _Log(), _Inverse())
}


@dataclass(frozen=True)
class FamilyLink:
    """A family/link pair plus the Jeffreys-penalty power.

    ``jeffreys_power`` scales only the lambda adjustment component and is
    used when fitting with the Jeffreys-prior penalty; it must be positive.
    """

    family: str
    link: str
    jeffreys_power: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(
                f"unknown family {self.family!r}; choose from {sorted(_FAMILIES)}"
            )
        fam = _FAMILIES[self.family]
        if self.link not in fam.links:
            raise ValueError(
                f"link {self.link!r} is not admissible for family "
                f"{self.family!r}; choose from {fam.links}"
            )
        if not self.jeffreys_power > 0:
            raise ValueError("jeffreys_power must be positive")

    @property
    def dispersion_fixed(self) -> bool:
        return _FAMILIES[self.family].dispersion_fixed

    @property
    def _fam(self) -> _Family:
        return _FAMILIES[self.family]

    @property
    def _lnk(self) -> _Link:
        return _LINKS[self.link]


@dataclass
class PointQuantities:
    """Per-observation ingredients of one weighted least-squares step."""

    mu: np.ndarray
    d: np.ndarray
    dprime: np.ndarray
    v: np.ndarray
    vprime: np.ndarray
    w: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    lam: np.ndarray


@dataclass
class DeviancePoint:
    """Deviance residual and its expectation for one observation."""

    q: np.ndarray
    rho: np.ndarray


def inverse_link(eta, fl: FamilyLink):
    """Mean implied by the linear predictor, clamped inside the mean space."""
    mu, _, _ = fl._lnk.raw(eta)
    fam = fl._fam
    if fam.mu_high is not None:
        return np.clip(mu, fam.mu_low, fam.mu_high)
    if np.isfinite(fam.mu_low):
        return np.maximum(mu, fam.mu_low)
    return mu


def point_quantities(eta, y, m, fl: FamilyLink) -> PointQuantities:
    """Everything a reweighted least-squares step needs, per observation.

    Returns the mean, link derivatives d and d', the variance function and
    its derivative, the working weight w = m*d^2/v, the working variate
    z = eta + (y - mu)/d, and the adjustment components xi and lambda.
    lambda is scaled by the configured Jeffreys power and is identically
    zero under a canonical link (the d'*v - v'*d^2 numerator cancels
    exactly, not approximately).
    """
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    mu, d, dprime = fl._lnk.raw(eta)
    fam = fl._fam
    v = fam.variance(mu)
    vprime = fam.dvariance(mu)
    w = m * d * d / v
    z = eta + (y - mu) / d
    xi = dprime / (2.0 * d * w)
    # lambda = t * (d'*v - v'*d^2) / (2*m*d^3); keep the grouping below so
    # the numerator cancels bitwise when d' = v'*d and v = d (canonical links)
    num = dprime * v - vprime * d * d
    lam = fl.jeffreys_power * (num / (2.0 * m * d ** 3))
    return PointQuantities(mu=mu, d=d, dprime=dprime, v=v, vprime=vprime,
                           w=w, z=z, xi=xi, lam=lam)


def deviance_point(eta, y, m, phi, fl: FamilyLink) -> DeviancePoint:
    """Deviance residual q = -2m{y*theta - b(theta) - c1(y)} and its mean.

    The expectation rho = m*a'(-m/phi) has a closed form only for the
    free-dispersion families; for binomial and poisson (phi fixed at 1)
    rho is returned as NaN and never enters any estimating equation.
    """
    if not phi > 0:
        raise ValueError("phi must be positive")
    fam = fl._fam
    if fam.dispersion_fixed and phi != 1.0:
        raise NotApplicableError(
            f"the {fl.family} family has dispersion fixed at 1 (got phi={phi})"
        )
    y = np.asarray(y, dtype=float)
    m = np.asarray(m, dtype=float)
    mu = inverse_link(eta, fl)
    theta = fam.theta(mu)
    q = -2.0 * m * (y * theta - fam.cumulant(mu) - fam.c1(y))
    if fl.family != "gamma":
        # rounding guard: q is nonnegative by construction for these c1
        q = np.maximum(q, 0.0)
    if fam.dispersion_fixed:
        rho = np.full_like(q, np.nan)
    else:
        aprime, _, _ = fam.a_derivatives(m, phi)
        rho = m * aprime
    return DeviancePoint(q=q, rho=rho)


def a_derivatives(m, phi, fl: FamilyLink):
    """First three derivatives of a(.) at u = -m/phi.

    Only defined for families with a free dispersion parameter; binomial
    and poisson raise NotApplicableError.
    """
    if not phi > 0:
        raise ValueError("phi must be positive")
    return fl._fam.a_derivatives(m, phi)
