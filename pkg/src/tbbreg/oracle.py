"""Brute-force verification engines used by the test suite and ``check`` command.

Three independent routes for checking the closed forms in
:mod:`tbbreg.distributions`: adaptive composite Simpson quadrature on the unit
interval, exact pmf summation, and compound-binomial pmf evaluation by
numerically mixing the binomial against the mixing density.  The code here
deliberately shares nothing with the closed forms it checks: the beta density
is rebuilt inline from its shape parameters, and binomial coefficients come
from ``math.lgamma`` instead of the library's log-factorial table.

Integrands carrying a beta kernel ``y**(a-1) * (1-y)**(b-1)`` with a shape
below 1 are singular at an endpoint, where plain panel refinement stalls; for
those, :func:`integrate_beta_weighted` removes the singular factor analytically
with the substitution ``y = delta * t**q`` (``q*a >= 4``) before applying the
same Simpson rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadratureError",
    "QuadratureResult",
    "integrate_unit_interval",
    "integrate_beta_weighted",
    "beta_log_pdf_indep",
    "pmf_moment_by_summation",
    "mixed_binomial_pmf_by_quadrature",
]

MAX_PANELS = 1 << 20
_MIN_PANELS = 8


class QuadratureError(RuntimeError):
    """Raised when panel refinement hits the cap without converging."""


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    estimated_error: float
    panels_used: int
    log_value: float = None  # set by the weighted integrator; survives underflow

    def __post_init__(self):
        if self.log_value is None:
            object.__setattr__(
                self,
                "log_value",
                math.log(self.value) if self.value > 0.0 else -math.inf,
            )


def _simpson_refine(f, lo, hi, tol, scale_floor):
    """Composite Simpson with panel doubling until successive estimates agree.

    Convergence requires |S_2n - S_n| < tol * max(|S_2n|, scale_floor); a
    floor of 1 makes the criterion absolute for O(1) integrands, a tiny floor
    makes it relative (used for beta-kernel pieces whose magnitude can be far
    from 1 in either direction).
    """
    if hi <= lo:
        return 0.0, 0.0, 0
    prev = None
    n = _MIN_PANELS
    while n <= MAX_PANELS:
        x = np.linspace(lo, hi, n + 1)
        fx = np.asarray(f(x), dtype=float)
        h = (hi - lo) / n
        s = (h / 3.0) * (
            fx[0] + fx[-1] + 4.0 * fx[1:-1:2].sum() + 2.0 * fx[2:-2:2].sum()
        )
        if prev is not None:
            err = abs(s - prev)
            if err < tol * max(abs(s), scale_floor):
                return s, err, n
        prev = s
        n *= 2
    raise QuadratureError(
        f"Simpson refinement did not converge within {MAX_PANELS} panels"
    )


def integrate_unit_interval(f, tol: float = 1e-12, inset: float = 1e-8) -> QuadratureResult:
    """Integrate a smooth vectorized integrand over (0, 1).

    Parameters
    ----------
    f : callable
        Vectorized integrand, finite on [inset, 1 - inset].
    tol : float
        Successive-estimate agreement target (absolute for O(1) integrands).
    inset : float
        Offset from the endpoints; pass 0 for integrands finite at 0 and 1.

    Raises :class:`QuadratureError` if the panel cap is reached.  Not suitable
    for integrands with endpoint singularities; use
    :func:`integrate_beta_weighted` for beta kernels with shapes below 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    value, err, panels = _simpson_refine(f, inset, 1.0 - inset, tol, scale_floor=1.0)
    return QuadratureResult(value, err, panels)


def _probe_max(logf, lo, hi):
    """Largest finite value of a vectorized log-integrand over a probe grid."""
    t = np.linspace(lo, hi, 1025)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(logf(t), dtype=float)
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0


def _power_substituted_tail(g, a, other_exponent, delta, tol, left: bool, skip_below=-math.inf):
    """Log-integral of g(y) y**(a-1) (1-y)**(b-1) over a tail of width delta.

    The singular factor at the near endpoint is removed by y = delta * t**q
    with integer q chosen so q*a >= 4; the far factor stays explicit.  For the
    right tail the roles of y and 1-y are mirrored.  The kernel is evaluated
    as exp(log kernel - offset) so that extreme exponents neither underflow
    nor overflow; the returned value is (log integral, relative error, panels).

    When the analytic upper bound of the tail falls below ``skip_below`` the
    piece is reported as zero without refinement: very large shapes turn the
    transformed integrand into an exponential boundary layer that panel
    doubling cannot resolve, while contributing nothing to the total.
    """
    q = 1 if a >= 4.0 else math.ceil(4.0 / a)
    b = other_exponent

    def log_kernel(t):
        yt = delta * np.power(t, q)
        with np.errstate(divide="ignore"):
            return (q * a - 1.0) * np.log(t) + (b - 1.0) * np.log1p(-yt)

    offset = _probe_max(log_kernel, 0.0, 1.0)
    log_scale = a * math.log(delta) + math.log(q) + offset
    if log_scale < skip_below:  # integrand <= exp(offset) on a unit interval
        return -math.inf, 0.0, 0

    def transformed(t):
        yt = delta * np.power(t, q)
        smooth = g(yt) if left else g(1.0 - yt)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.exp(log_kernel(t) - offset)
        return np.where(t > 0.0, k, 0.0) * smooth  # q*a-1 > 0: limit at t=0 is 0

    raw, err, panels = _simpson_refine(
        transformed, 0.0, 1.0, tol, scale_floor=np.finfo(float).tiny
    )
    log_value = math.log(raw) + log_scale if raw > 0.0 else -math.inf
    rel_err = err / raw if raw > 0.0 else 0.0
    return log_value, rel_err, panels


def integrate_beta_weighted(g, a: float, b: float, tol: float = 1e-12) -> QuadratureResult:
    """Integrate g(y) * y**(a-1) * (1-y)**(b-1) over (0, 1) for nonnegative g.

    ``g`` must be smooth and nonnegative on the closed interval (pass ``None``
    for g = 1).  Endpoint singularities from shapes below 1 are removed
    analytically and extreme shapes are handled in log space, so the result is
    accurate to roughly ``tol`` in relative terms across the whole admissible
    range; read ``log_value`` when the plain value may under- or overflow.
    """
    if a <= 0 or b <= 0:
        raise ValueError("kernel exponents must be positive")
    if g is None:
        g = lambda y: np.ones_like(y)
    delta = 0.2

    def log_kernel(y):
        return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y)

    # include the interior mode of the kernel in the offset probe
    offset = _probe_max(log_kernel, delta, 1.0 - delta)
    if a > 1.0 and b > 1.0:
        mode = min(max((a - 1.0) / (a + b - 2.0), delta), 1.0 - delta)
        offset = max(offset, float(log_kernel(np.array(mode))))

    def middle(y):
        return g(y) * np.exp(log_kernel(y) - offset)

    raw, err, mp = _simpson_refine(
        middle, delta, 1.0 - delta, tol, scale_floor=np.finfo(float).tiny
    )
    mlog = math.log(raw) + offset if raw > 0.0 else -math.inf
    mrel = err / raw if raw > 0.0 else 0.0

    skip_below = mlog - 46.0  # e^-46: far below any tolerance in use
    llog, lrel, lp = _power_substituted_tail(g, a, b, delta, tol, left=True, skip_below=skip_below)
    rlog, rrel, rp = _power_substituted_tail(g, b, a, delta, tol, left=False, skip_below=skip_below)
    logs = np.array([llog, mlog, rlog])
    top = logs.max()
    log_value = (
        top + math.log(np.exp(logs - top).sum()) if np.isfinite(top) else -math.inf
    )
    value = math.exp(log_value) if log_value < 709.0 else math.inf
    rel = max(lrel, mrel, rrel)
    return QuadratureResult(
        value=value,
        estimated_error=value * rel if np.isfinite(value) else rel,
        panels_used=lp + mp + rp,
        log_value=log_value,
    )


def beta_log_pdf_indep(y, mu: float, phi: float):
    """Independent beta log-density with shapes mu*phi and (1-mu)*phi built inline."""
    a = mu * phi
    b = (1.0 - mu) * phi
    lnorm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    yarr = np.asarray(y, dtype=float)
    return (a - 1.0) * np.log(yarr) + (b - 1.0) * np.log1p(-yarr) - lnorm


def _log_choose_lgamma(m: int, y: int) -> float:
    return math.lgamma(m + 1) - math.lgamma(y + 1) - math.lgamma(m - y + 1)


def pmf_moment_by_summation(log_pmf, m: int, order: int) -> float:
    """Sum y**order * exp(log_pmf(y)) over the full support {0, ..., m}.

    ``order`` must be 1 or 2.  Warns if the pmf mass strays from 1 by more
    than 1e-8, which indicates the pmf under test is broken.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    ys = np.arange(m + 1)
    mass = np.exp([log_pmf(int(y)) for y in ys])
    total = mass.sum()
    if not (1.0 - 1e-8 <= total <= 1.0 + 1e-8):
        warnings.warn(
            f"pmf mass sums to {total!r}, outside [1-1e-8, 1+1e-8]",
            stacklevel=2,
        )
    return float((ys.astype(float) ** order * mass).sum())


def _tilted_mixing_pdf(p, mu_t):
    # retyped from the linear-density definition; no shared code with the library
    return 3.0 * (2.0 * mu_t - 1.0) * (2.0 * p - 1.0) + 1.0


def mixed_binomial_pmf_by_quadrature(y: int, m: int, mixing, tol: float = 1e-12) -> float:
    """pmf of a binomial compounded over a mixing density, by quadrature.

    ``mixing`` is either a smooth vectorized density callable on (0, 1), or a
    tuple ``(mu_t, mu_b, phi, theta)`` describing the tilted/beta mixture, in
    which case the beta component's endpoint singularities are handled by the
    weighted integrator and the beta normalizer itself is also computed by
    quadrature.
    """
    if not 0 <= y <= m:
        raise ValueError(f"y must lie in [0, {m}], got {y!r}")
    logc = _log_choose_lgamma(m, y)

    if callable(mixing):
        def integrand(p):
            return (
                math.exp(logc)
                * np.power(p, y)
                * np.power(1.0 - p, m - y)
                * mixing(p)
            )

        return integrate_unit_interval(integrand, tol, inset=0.0).value

    mu_t, mu_b, phi, theta = mixing
    tilted_part = 0.0
    if theta > 0.0:
        def tilted_integrand(p):
            return (
                math.exp(logc)
                * np.power(p, y)
                * np.power(1.0 - p, m - y)
                * _tilted_mixing_pdf(p, mu_t)
            )

        tilted_part = integrate_unit_interval(tilted_integrand, tol, inset=0.0).value
    beta_part = 0.0
    if theta < 1.0:
        a = mu_b * phi
        b = (1.0 - mu_b) * phi
        numer = integrate_beta_weighted(None, y + a, m - y + b, tol).log_value
        denom = integrate_beta_weighted(None, a, b, tol).log_value
        beta_part = math.exp(logc + numer - denom)
    return theta * tilted_part + (1.0 - theta) * beta_part
