"""Tilted, tilted beta, and compound binomial distributions.

The tilted distribution is the linear density on (0, 1) parameterized by its
mean ``mu_t``, admissible for ``mu_t`` in [1/3, 2/3].  Mixing it (weight
``theta``) with a beta distribution in mean/dispersion form gives the tilted
beta distribution; letting that mixture drive the success probability of a
binomial yields the tilted beta binomial (TBB) count distribution.  Fixing the
tilted mean at 1/2 (a uniform component) recovers the beta rectangular
binomial (BRB), and ``theta = 0`` recovers the plain beta binomial.

All pmf arithmetic is done in log space via log-gamma/log-factorial, and
mixture pmfs combine their two component log-masses with log-sum-exp so that
weights near 0 or 1 and very large dispersions stay representable.  Every
function is pure; samplers take a caller-owned :class:`numpy.random.Generator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

__all__ = [
    "DomainError",
    "TiltedParams",
    "BetaMeanDisp",
    "TiltedBetaParams",
    "TiltedBetaBinomialParams",
    "tbb_params",
    "log_choose",
    "tilted_pdf",
    "tilted_moment",
    "tilted_variance",
    "beta_binomial_log_pmf",
    "tilted_beta_pdf",
    "tilted_beta_mean",
    "tilted_beta_variance",
    "tbb_log_pmf",
    "brb_log_pmf",
    "tbb_mean",
    "tbb_variance",
    "sample_tilted",
    "sample_tbb",
]

MU_T_LO = 1.0 / 3.0
MU_T_HI = 2.0 / 3.0

_BOUND_TOL = 1e-12
_LOG2 = math.log(2.0)


class DomainError(ValueError):
    """Argument outside the support or the admissible parameter region."""


# ---------------------------------------------------------------------------
# Binomial coefficients via a log-factorial table, grown on demand.
# ---------------------------------------------------------------------------

_LOGFACT = np.zeros(2)


def _log_factorial(k):
    """log(k!) for nonnegative integer scalars or arrays, from a cached table."""
    global _LOGFACT
    karr = np.asarray(k)
    kmax = int(karr.max()) if karr.size else 0
    if kmax >= _LOGFACT.size:
        start = _LOGFACT.size
        ext = np.cumsum(np.log(np.arange(start, kmax + 1, dtype=float)))
        _LOGFACT = np.concatenate([_LOGFACT, ext + _LOGFACT[-1]])
    return _LOGFACT[karr]


def log_choose(m, y):
    """log of the binomial coefficient C(m, y), exact for integer arguments."""
    return _log_factorial(m) - _log_factorial(y) - _log_factorial(np.asarray(m) - y)


def _log_beta_int(i, j):
    """log B(i, j) for positive integers: (i-1)!(j-1)!/(i+j-1)!."""
    return (
        _log_factorial(np.asarray(i) - 1)
        + _log_factorial(np.asarray(j) - 1)
        - _log_factorial(np.asarray(i) + np.asarray(j) - 1)
    )


# ---------------------------------------------------------------------------
# Parameter bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TiltedParams:
    """Mean of the tilted (linear) density on (0, 1); requires 1/3 <= mu_t <= 2/3."""

    mu_t: float

    def __post_init__(self):
        if not (MU_T_LO - _BOUND_TOL <= self.mu_t <= MU_T_HI + _BOUND_TOL):
            raise DomainError(
                f"mu_t must lie in [1/3, 2/3], got {self.mu_t!r}"
            )


@dataclass(frozen=True)
class BetaMeanDisp:
    """Beta distribution in mean/dispersion form: shapes mu_b*phi and (1-mu_b)*phi."""

    mu_b: float
    phi: float

    def __post_init__(self):
        if not 0.0 < self.mu_b < 1.0:
            raise DomainError(f"mu_b must lie in (0, 1), got {self.mu_b!r}")
        if not self.phi > 0.0:
            raise DomainError(f"phi must be positive, got {self.phi!r}")

    @property
    def shape_a(self) -> float:
        return self.mu_b * self.phi

    @property
    def shape_b(self) -> float:
        return (1.0 - self.mu_b) * self.phi

    @property
    def variance(self) -> float:
        return self.mu_b * (1.0 - self.mu_b) / (1.0 + self.phi)


@dataclass(frozen=True)
class TiltedBetaParams:
    """Mixture of a tilted and a beta component with weight theta on the tilted one."""

    tilted: TiltedParams
    beta: BetaMeanDisp
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta!r}")


@dataclass(frozen=True)
class TiltedBetaBinomialParams:
    """TBB counts: binomial with m trials whose success probability is tilted-beta."""

    mix: TiltedBetaParams
    m: int

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise DomainError(f"m must be an integer >= 1, got {self.m!r}")


def tbb_params(mu_t, mu_b, phi, theta, m) -> TiltedBetaBinomialParams:
    """Convenience constructor from flat (mu_t, mu_b, phi, theta, m) values."""
    return TiltedBetaBinomialParams(
        TiltedBetaParams(TiltedParams(mu_t), BetaMeanDisp(mu_b, phi), theta), int(m)
    )


def _check_count(y, m):
    yarr = np.asarray(y)
    if np.any(yarr < 0) or np.any(yarr > m):
        raise DomainError(f"count y must lie in [0, {m}], got {y!r}")


# ---------------------------------------------------------------------------
# Tilted distribution
# ---------------------------------------------------------------------------


def tilted_pdf(y, p: TiltedParams):
    """Tilted density 3(2*mu_t - 1)(2y - 1) + 1 on the open interval (0, 1)."""
    yarr = np.asarray(y, dtype=float)
    if np.any((yarr <= 0.0) | (yarr >= 1.0)):
        raise DomainError("tilted density is supported on the open interval (0, 1)")
    out = 3.0 * (2.0 * p.mu_t - 1.0) * (2.0 * yarr - 1.0) + 1.0
    return out if out.ndim else float(out)


def tilted_moment(n: int, p: TiltedParams) -> float:
    """n-th raw moment (3n(2*mu_t - 1) + n + 2) / ((n + 1)(n + 2))."""
    if not (isinstance(n, (int, np.integer)) and n >= 1):
        raise DomainError(f"moment order must be an integer >= 1, got {n!r}")
    return (3.0 * n * (2.0 * p.mu_t - 1.0) + n + 2.0) / ((n + 1.0) * (n + 2.0))


def tilted_variance(p: TiltedParams) -> float:
    """Variance mu_t(1 - mu_t) - 1/6."""
    return p.mu_t * (1.0 - p.mu_t) - 1.0 / 6.0


def sample_tilted(p: TiltedParams, rng: np.random.Generator, size=None):
    """Draw from the tilted density by inverting F(y) = 3(2mu_t-1)(y^2-y) + y.

    The quadratic a*y^2 + (1-a)*y = u with a = 3(2*mu_t - 1) is solved in the
    rationalized form y = 2u / (1 - a + sqrt((1-a)^2 + 4au)), which is stable
    for a near 0 and reduces to y = u for mu_t = 1/2.
    """
    u = rng.random(size)
    u = np.maximum(u, np.finfo(float).tiny)  # stay inside the open interval
    a = 3.0 * (2.0 * p.mu_t - 1.0)
    y = 2.0 * u / ((1.0 - a) + np.sqrt((1.0 - a) ** 2 + 4.0 * a * u))
    return y if size is not None else float(y)


# ---------------------------------------------------------------------------
# Beta binomial (mean/dispersion form)
# ---------------------------------------------------------------------------


def beta_binomial_log_pmf(y, m: int, p: BetaMeanDisp):
    """log pmf of the beta binomial with mean mu_b and dispersion phi.

    log C(m, y) + log B(y + mu_b*phi, m - y + (1-mu_b)*phi) - log B(mu_b*phi, (1-mu_b)*phi)
    """
    _check_count(y, m)
    yarr = np.asarray(y)
    a = p.shape_a
    b = p.shape_b
    out = log_choose(m, yarr) + betaln(yarr + a, m - yarr + b) - betaln(a, b)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# Tilted beta mixture
# ---------------------------------------------------------------------------


def _beta_pdf(y, p: BetaMeanDisp):
    a = p.shape_a
    b = p.shape_b
    return np.exp((a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - betaln(a, b))


def tilted_beta_pdf(y, p: TiltedBetaParams):
    """Mixture density theta * tilted + (1 - theta) * beta on (0, 1)."""
    yarr = np.asarray(y, dtype=float)
    if np.any((yarr <= 0.0) | (yarr >= 1.0)):
        raise DomainError("tilted beta density is supported on (0, 1)")
    if p.theta == 1.0:
        out = tilted_pdf(yarr, p.tilted)
    elif p.theta == 0.0:
        out = _beta_pdf(yarr, p.beta)
    else:
        out = p.theta * tilted_pdf(yarr, p.tilted) + (1.0 - p.theta) * _beta_pdf(
            yarr, p.beta
        )
    return out if np.ndim(out) else float(out)


def tilted_beta_mean(p: TiltedBetaParams) -> float:
    """Mixture mean theta*mu_t + (1 - theta)*mu_b."""
    return p.theta * p.tilted.mu_t + (1.0 - p.theta) * p.beta.mu_b


def tilted_beta_variance(p: TiltedBetaParams) -> float:
    """Mixture variance theta*V_t + (1-theta)*V_b + theta(1-theta)(mu_t - mu_b)^2."""
    d = p.tilted.mu_t - p.beta.mu_b
    return (
        p.theta * tilted_variance(p.tilted)
        + (1.0 - p.theta) * p.beta.variance
        + p.theta * (1.0 - p.theta) * d * d
    )


# ---------------------------------------------------------------------------
# Tilted beta binomial / beta rectangular binomial
# ---------------------------------------------------------------------------


def _tilted_binomial_log_pmf(y, m: int, mu_t: float):
    """log of the binomial pmf mixed against the tilted density in closed form.

    2 * C(m, y) * [(y(6*mu_t - 3) + m(2 - 3*mu_t) + 1) / (m + 2)] * B(y+1, m-y+1)

    The bracket is positive throughout y in [0, m] whenever mu_t lies in
    [1/3, 2/3].
    """
    yarr = np.asarray(y)
    bracket = yarr * (6.0 * mu_t - 3.0) + m * (2.0 - 3.0 * mu_t) + 1.0
    return (
        _LOG2
        + log_choose(m, yarr)
        + np.log(bracket)
        - math.log(m + 2.0)
        + _log_beta_int(yarr + 1, m - yarr + 1)
    )


def tbb_log_pmf(y, p: TiltedBetaBinomialParams):
    """log pmf of the tilted beta binomial, combining components by log-sum-exp."""
    _check_count(y, p.m)
    theta = p.mix.theta
    if theta == 0.0:
        out = beta_binomial_log_pmf(y, p.m, p.mix.beta)
    elif theta == 1.0:
        out = _tilted_binomial_log_pmf(y, p.m, p.mix.tilted.mu_t)
    else:
        lt = math.log(theta) + _tilted_binomial_log_pmf(y, p.m, p.mix.tilted.mu_t)
        lb = math.log1p(-theta) + beta_binomial_log_pmf(y, p.m, p.mix.beta)
        out = np.logaddexp(lt, lb)
    return out if np.ndim(out) else float(out)


def brb_log_pmf(y, m: int, p_beta: BetaMeanDisp, theta: float):
    """log pmf of the beta rectangular binomial: the TBB with mu_t fixed at 1/2."""
    return tbb_log_pmf(
        y, TiltedBetaBinomialParams(TiltedBetaParams(TiltedParams(0.5), p_beta, theta), m)
    )


def tbb_mean(p: TiltedBetaBinomialParams) -> float:
    """E(Y) = m * [theta*mu_t + (1 - theta)*mu_b]."""
    return p.m * tilted_beta_mean(p.mix)


def tbb_variance(p: TiltedBetaBinomialParams) -> float:
    """V(Y) = m * {(m - 1) V(p) + E(p)(1 - E(p))} for the mixing distribution p."""
    ep = tilted_beta_mean(p.mix)
    vp = tilted_beta_variance(p.mix)
    return p.m * ((p.m - 1.0) * vp + ep * (1.0 - ep))


def sample_tbb(p: TiltedBetaBinomialParams, rng: np.random.Generator, size=None):
    """Draw TBB counts by composition: component by theta, then p, then binomial."""
    n = 1 if size is None else int(size)
    probs = np.empty(n)
    use_tilted = rng.random(n) < p.mix.theta
    k = int(use_tilted.sum())
    if k:
        probs[use_tilted] = sample_tilted(p.mix.tilted, rng, size=k)
    if k < n:
        probs[~use_tilted] = rng.beta(p.mix.beta.shape_a, p.mix.beta.shape_b, size=n - k)
    draws = rng.binomial(p.m, probs)
    return draws if size is not None else int(draws[0])
