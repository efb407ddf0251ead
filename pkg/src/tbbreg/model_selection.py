"""Deviance summaries and DIC-based comparison of fitted model families.

DIC = D_bar + p_D with p_D = D_bar - D(theta_bar): D_bar is the average of
the deviance trace over all retained draws and D(theta_bar) is the deviance
at the coordinatewise posterior mean of the stacked parameter vector on the
sampling scale (raw coefficients and raw tilted mean).  Quantiles use the
usual linear interpolation of order statistics (numpy default, type 7).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tbbreg import mcmc, regression
from tbbreg.regression import Dataset, ModelSpec, ParameterVector

__all__ = [
    "DicResult",
    "DevianceSummary",
    "ComparisonRow",
    "dic",
    "deviance_summary",
    "compare_families",
    "comparison_table",
]


@dataclass(frozen=True)
class DicResult:
    dic: float
    p_d: float
    d_bar: float
    d_hat: float


@dataclass(frozen=True)
class DevianceSummary:
    mean: float
    sd: float
    q2_5: float
    q97_5: float
    median: float


@dataclass
class ComparisonRow:
    """One family's entry in the model-comparison table."""

    label: str
    dic: float = float("nan")
    p_d: float = float("nan")
    deviance: DevianceSummary | None = None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def dic(posterior, spec: ModelSpec, data: Dataset) -> DicResult:
    """Deviance information criterion from the recorded deviance trace."""
    trace = posterior.stacked_deviance()
    if trace.size < 1:
        raise ValueError("posterior has no deviance trace")
    d_bar = float(trace.mean())
    at_mean = ParameterVector.from_stacked(spec, posterior.posterior_mean())
    d_hat = regression.deviance(spec, data, at_mean)
    if not np.isfinite(d_hat):
        raise ValueError("deviance at the posterior mean is not finite")
    p_d = d_bar - d_hat
    return DicResult(dic=d_bar + p_d, p_d=p_d, d_bar=d_bar, d_hat=d_hat)


def deviance_summary(trace) -> DevianceSummary:
    """Mean, sd, central 95% interval, and median of a deviance trace."""
    x = np.asarray(trace, dtype=float).reshape(-1)
    if x.size < 2:
        raise ValueError("deviance trace must contain at least 2 values")
    q2_5, median, q97_5 = np.quantile(x, [0.025, 0.5, 0.975])
    return DevianceSummary(
        mean=float(x.mean()),
        sd=float(x.std(ddof=1)),
        q2_5=float(q2_5),
        q97_5=float(q97_5),
        median=float(median),
    )


def compare_families(specs, data: Dataset, prior, config):
    """Fit each spec and return rows sorted by DIC (failed fits last).

    A failing family is reported in its row's ``error`` field without
    aborting the remaining fits.
    """
    rows = []
    for spec in specs:
        label = spec.family.short
        try:
            posterior = mcmc.run_chains(spec, data, prior, config)
            d = dic(posterior, spec, data)
            rows.append(
                ComparisonRow(
                    label=label,
                    dic=d.dic,
                    p_d=d.p_d,
                    deviance=deviance_summary(posterior.stacked_deviance()),
                )
            )
        except Exception as exc:  # a broken family must not sink the others
            rows.append(ComparisonRow(label=label, error=str(exc)))
    rows.sort(key=lambda r: (r.failed, r.dic if np.isfinite(r.dic) else np.inf))
    return rows


def comparison_table(rows) -> str:
    """Aligned text table: DIC plus deviance mean/sd/interval/median per family."""
    header = (
        f"{'Model':<6} {'DIC':>8} {'pD':>7} {'Dev.mean':>9} {'Dev.sd':>7} "
        f"{'95% interval':>18} {'Median':>8}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        if r.failed:
            lines.append(f"{r.label:<6} fit failed: {r.error}")
            continue
        d = r.deviance
        lines.append(
            f"{r.label:<6} {r.dic:>8.1f} {r.p_d:>7.2f} {d.mean:>9.1f} {d.sd:>7.3f} "
            f"{'(' + format(d.q2_5, '.1f') + ',' + format(d.q97_5, '.1f') + ')':>18} "
            f"{d.median:>8.1f}"
        )
    return "\n".join(lines)
