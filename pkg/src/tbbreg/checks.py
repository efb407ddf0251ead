"""Self-verification battery comparing closed forms against the brute-force oracles.

Run via ``tbbreg check``.  Everything here goes through module attribute
lookups (``dist.tbb_log_pmf`` etc.) so a corrupted implementation is picked up
even if it was monkeypatched after import.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tbbreg import distributions as dist
from tbbreg import oracle

__all__ = ["CheckResult", "CheckReport", "run_self_checks", "parameter_grid"]

_EPS = 1e-3

MU_T_GRID = (1.0 / 3.0 + _EPS, 0.5, 2.0 / 3.0 - _EPS)
THETA_GRID = (0.0, _EPS, 1.0 - _EPS, 1.0)
PHI_GRID = (0.1, 1.0, 100.0)
MU_B_DEFAULT = 0.3
M_DEFAULT = 17


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class CheckReport:
    results: list = field(default_factory=list)
    grid_size: int = 0

    @property
    def n_failed(self) -> int:
        return sum(not r.passed for r in self.results)

    @property
    def passed(self) -> bool:
        return self.n_failed == 0

    def add(self, name: str, passed: bool, detail: str = ""):
        self.results.append(CheckResult(name, bool(passed), detail))

    def lines(self):
        out = [
            f"[{'PASS' if r.passed else 'FAIL'}] {r.name}"
            + (f"  ({r.detail})" if r.detail else "")
            for r in self.results
        ]
        out.append(
            f"{len(self.results) - self.n_failed}/{len(self.results)} checks passed "
            f"over a {self.grid_size}-point parameter grid"
        )
        return out


def parameter_grid():
    """The (mu_t, theta, phi) grid used throughout: 3 x 4 x 3 = 36 points."""
    return [
        (mu_t, theta, phi)
        for mu_t in MU_T_GRID
        for theta in THETA_GRID
        for phi in PHI_GRID
    ]


def _pmf_mass(log_pmf, m):
    return sum(math.exp(log_pmf(y)) for y in range(m + 1))


def _on_open(f, eps=1e-12):
    return lambda y: f(np.clip(y, eps, 1.0 - eps))


def _beta_mass_by_quadrature(mu_b, phi, tol=1e-12):
    a = mu_b * phi
    b = (1.0 - mu_b) * phi
    kernel = oracle.integrate_beta_weighted(None, a, b, tol).value
    return kernel * math.exp(-(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)))


def _beta_moment_by_quadrature(mu_b, phi, order, tol=1e-12):
    a = mu_b * phi
    b = (1.0 - mu_b) * phi
    num = oracle.integrate_beta_weighted(lambda y: y**order, a, b, tol).value
    den = oracle.integrate_beta_weighted(None, a, b, tol).value
    return num / den


def run_self_checks(
    tol_norm: float = 1e-10,
    tol_moment: float = 1e-9,
    tol_reduction: float = 1e-13,
    tol_compound: float = 1e-9,
) -> CheckReport:
    """Normalization, moment, reduction, and compound-pmf checks on the grid."""
    report = CheckReport()
    grid = parameter_grid()
    report.grid_size = len(grid)

    # --- count-distribution normalization over the full grid ----------------
    worst = 0.0
    for mu_t, theta, phi in grid:
        p = dist.tbb_params(mu_t, mu_b=MU_B_DEFAULT, phi=phi, theta=theta, m=M_DEFAULT)
        worst = max(worst, abs(_pmf_mass(lambda y: dist.tbb_log_pmf(y, p), M_DEFAULT) - 1.0))
        worst = max(
            worst,
            abs(
                _pmf_mass(
                    lambda y: dist.brb_log_pmf(
                        y, M_DEFAULT, dist.BetaMeanDisp(MU_B_DEFAULT, phi), theta
                    ),
                    M_DEFAULT,
                )
                - 1.0
            ),
        )
    for phi in PHI_GRID:
        bb = dist.BetaMeanDisp(MU_B_DEFAULT, phi)
        worst = max(
            worst,
            abs(_pmf_mass(lambda y: dist.beta_binomial_log_pmf(y, M_DEFAULT, bb), M_DEFAULT) - 1.0),
        )
    report.add(
        "pmf normalization (TBB, BRB, BB) on the grid",
        worst <= tol_norm,
        f"worst |mass-1| = {worst:.2e}",
    )

    # --- continuous-density normalization ------------------------------------
    worst = 0.0
    for mu_t in MU_T_GRID:
        tp = dist.TiltedParams(mu_t)
        q = oracle.integrate_unit_interval(
            _on_open(lambda y: dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
        )
        worst = max(worst, abs(q.value - 1.0))
    for mu_t, theta, phi in grid:
        if theta in (0.0, 1.0):
            continue
        # mixture mass assembled per component: the beta part's endpoint
        # singularities need the weighted integrator
        tp = dist.TiltedParams(mu_t)
        t_mass = oracle.integrate_unit_interval(
            _on_open(lambda y: dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
        ).value
        b_mass = _beta_mass_by_quadrature(MU_B_DEFAULT, phi)
        worst = max(worst, abs(theta * t_mass + (1.0 - theta) * b_mass - 1.0))
    report.add(
        "density normalization (tilted, tilted beta) on the grid",
        worst <= tol_norm,
        f"worst |mass-1| = {worst:.2e}",
    )

    # --- closed-form moments vs summation oracle -----------------------------
    worst = 0.0
    for mu_t, theta, phi in grid:
        p = dist.tbb_params(mu_t, MU_B_DEFAULT, phi, theta, M_DEFAULT)
        lp = lambda y: dist.tbb_log_pmf(y, p)
        m1 = oracle.pmf_moment_by_summation(lp, M_DEFAULT, 1)
        m2 = oracle.pmf_moment_by_summation(lp, M_DEFAULT, 2)
        worst = max(worst, abs(dist.tbb_mean(p) - m1))
        worst = max(worst, abs(dist.tbb_variance(p) - (m2 - m1 * m1)))
    report.add(
        "TBB mean/variance vs exact pmf summation",
        worst <= tol_moment,
        f"worst deviation = {worst:.2e}",
    )

    worst = 0.0
    for mu_t in MU_T_GRID:
        tp = dist.TiltedParams(mu_t)
        for n in (1, 2, 3):
            q = oracle.integrate_unit_interval(
                _on_open(lambda y: y**n * dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
            ).value
            worst = max(worst, abs(dist.tilted_moment(n, tp) - q))
        v = dist.tilted_variance(tp)
        q1 = dist.tilted_moment(1, tp)
        q2 = oracle.integrate_unit_interval(
            _on_open(lambda y: y * y * dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
        ).value
        worst = max(worst, abs(v - (q2 - q1 * q1)))
    report.add(
        "tilted moments vs quadrature",
        worst <= tol_moment,
        f"worst deviation = {worst:.2e}",
    )

    worst = 0.0
    for mu_t, theta, phi in grid:
        if theta in (0.0, 1.0):
            continue
        mix = dist.TiltedBetaParams(
            dist.TiltedParams(mu_t), dist.BetaMeanDisp(MU_B_DEFAULT, phi), theta
        )
        tp = mix.tilted
        t1 = oracle.integrate_unit_interval(
            _on_open(lambda y: y * dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
        ).value
        t2 = oracle.integrate_unit_interval(
            _on_open(lambda y: y * y * dist.tilted_pdf(y, tp)), 1e-13, inset=0.0
        ).value
        b1 = _beta_moment_by_quadrature(MU_B_DEFAULT, phi, 1)
        b2 = _beta_moment_by_quadrature(MU_B_DEFAULT, phi, 2)
        m1 = theta * t1 + (1.0 - theta) * b1
        m2 = theta * t2 + (1.0 - theta) * b2
        worst = max(worst, abs(dist.tilted_beta_mean(mix) - m1))
        worst = max(worst, abs(dist.tilted_beta_variance(mix) - (m2 - m1 * m1)))
    report.add(
        "tilted-beta mean/variance vs quadrature (settles the mixture-variance sign)",
        worst <= tol_moment,
        f"worst deviation = {worst:.2e}",
    )

    # --- reduction chain ------------------------------------------------------
    worst = 0.0
    m = 15
    bb = dist.BetaMeanDisp(0.35, 2.0)
    for y in range(m + 1):
        p0 = dist.tbb_params(0.45, 0.35, 2.0, 0.0, m)
        worst = max(
            worst, abs(dist.tbb_log_pmf(y, p0) - dist.beta_binomial_log_pmf(y, m, bb))
        )
        ph = dist.tbb_params(0.5, 0.35, 2.0, 0.4, m)
        worst = max(worst, abs(dist.tbb_log_pmf(y, ph) - dist.brb_log_pmf(y, m, bb, 0.4)))
        worst = max(
            worst, abs(dist.brb_log_pmf(y, m, bb, 0.0) - dist.beta_binomial_log_pmf(y, m, bb))
        )
    report.add(
        "reductions TBB(theta=0)=BB, TBB(mu_t=1/2)=BRB, BRB(theta=0)=BB",
        worst <= tol_reduction,
        f"worst |log-pmf diff| = {worst:.2e}",
    )

    # --- compound pmf vs quadrature mixing ------------------------------------
    compound_points = [
        (8, 0.55, 0.35, 2.5, 0.4),
        (12, 1.0 / 3.0 + _EPS, 0.3, 0.1, 0.25),
        (20, 0.5, 0.6, 5.0, 0.3),
        (5, 2.0 / 3.0 - _EPS, 0.2, 100.0, 1.0 - _EPS),
        (10, 0.45, 0.7, 1.0, _EPS),
    ]
    worst = 0.0
    for m, mu_t, mu_b, phi, theta in compound_points:
        p = dist.tbb_params(mu_t, mu_b, phi, theta, m)
        for y in range(m + 1):
            q = oracle.mixed_binomial_pmf_by_quadrature(y, m, (mu_t, mu_b, phi, theta))
            worst = max(worst, abs(q - math.exp(dist.tbb_log_pmf(y, p))))
    report.add(
        "TBB closed-form pmf vs compound quadrature at 5 grid points",
        worst <= tol_compound,
        f"worst |pmf diff| = {worst:.2e}",
    )

    # --- overdispersion inequality --------------------------------------------
    worst = -np.inf
    for mu_t, theta, phi in grid:
        p = dist.tbb_params(mu_t, MU_B_DEFAULT, phi, theta, M_DEFAULT)
        ep = dist.tilted_beta_mean(p.mix)
        slack = M_DEFAULT * ep * (1.0 - ep) - dist.tbb_variance(p)
        worst = max(worst, slack)
    report.add(
        "TBB variance never below the plug-in binomial variance",
        worst <= 1e-12,
        f"worst binomial-minus-TBB variance = {worst:.2e}",
    )

    return report
