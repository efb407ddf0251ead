"""Chain convergence diagnostics and model residuals.

Implements the Geweke two-window Z score (spectral variance at frequency zero
by a Bartlett lag window of width 0.5*sqrt(n)), the Brooks-Gelman-Rubin scale
reduction factor, naive and batch-means Monte Carlo standard errors, the
standard biased autocorrelation estimator, and posterior Pearson residuals
(observed minus posterior-mean fitted mean, over the square root of the
posterior-mean fitted variance).

The scale reduction factor is normalized so that identical chains give
exactly 1: with within-chain variance W and between-chain variance B,
``R^2 = 1 + (m+1) * B / (m * (n-1) * W)``, the Brooks & Gelman corrected
statistic rescaled by n/(n-1).  It is >= 1 by construction and agrees with
the textbook form to O(1/n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tbbreg.regression import Dataset, ModelEvaluator, ModelSpec

__all__ = [
    "McError",
    "DiagnosticsReport",
    "geweke_z",
    "geweke_segments",
    "gelman_rubin_r",
    "gelman_rubin_trace",
    "mc_error",
    "autocorrelation",
    "pearson_residuals",
    "diagnostics_report",
]


def _spectral_variance(x: np.ndarray) -> float:
    """Spectral density at zero via a Bartlett lag window of width 0.5*sqrt(n)."""
    n = x.size
    xc = x - x.mean()
    gamma0 = float(xc @ xc) / n
    lag_max = int(0.5 * np.sqrt(n))
    s = gamma0
    for k in range(1, lag_max + 1):
        gamma_k = float(xc[:-k] @ xc[k:]) / n
        s += 2.0 * (1.0 - k / (lag_max + 1.0)) * gamma_k
    return max(s, 0.0)


def geweke_z(chain, first_frac: float = 0.1, last_frac: float = 0.5) -> float:
    """Z score comparing the means of an early and a late chain window.

    |Z| < 1.96 is consistent with stationarity at the 95% level.  A constant
    chain returns 0 by convention.
    """
    x = np.asarray(chain, dtype=float)
    if x.size < 100:
        raise ValueError(f"chain too short for the Geweke diagnostic ({x.size} < 100)")
    if first_frac <= 0 or last_frac <= 0 or first_frac + last_frac > 1.0:
        raise ValueError("window fractions must be positive and sum to at most 1")
    na = int(first_frac * x.size)
    nb = int(last_frac * x.size)
    a = x[:na]
    b = x[x.size - nb :]
    if np.ptp(a) == 0.0 and np.ptp(b) == 0.0:  # constant windows, incl. roundoff
        return 0.0 if a[0] == b[0] else math.inf * np.sign(a[0] - b[0])
    var = _spectral_variance(a) / na + _spectral_variance(b) / nb
    diff = a.mean() - b.mean()
    if var == 0.0:
        return 0.0 if diff == 0.0 else math.inf * float(np.sign(diff))
    return float(diff / np.sqrt(var))


def geweke_segments(chain, n_segments: int = 20, first_frac: float = 0.1, last_frac: float = 0.5):
    """Z recomputed from successively later starting points (Geweke-Brooks plot data).

    Segment k drops the first k/(2*n_segments) of the chain; returns the array
    of kept-start indices and the matching Z values.
    """
    x = np.asarray(chain, dtype=float)
    starts = np.array(
        [int(k * (x.size // 2) / n_segments) for k in range(n_segments)], dtype=int
    )
    zs = np.array([geweke_z(x[s:], first_frac, last_frac) for s in starts])
    return starts, zs


def gelman_rubin_r(chains) -> float:
    """Scale reduction factor from two or more equal-length chains.

    Values well above 1 indicate the chains have not converged; identical
    chains give exactly 1.
    """
    seqs = [np.asarray(c, dtype=float) for c in chains]
    if len(seqs) < 2:
        raise ValueError("the scale reduction factor needs at least 2 chains")
    n = seqs[0].size
    if any(s.size != n for s in seqs):
        raise ValueError("all chains must have equal length")
    if n < 10:
        raise ValueError(f"chains too short ({n} < 10)")
    arr = np.stack(seqs)
    m = arr.shape[0]
    w = arr.var(axis=1, ddof=1).mean()
    b = n * arr.mean(axis=1).var(ddof=1)
    if b == 0.0:
        return 1.0
    if w == 0.0:
        return np.inf
    r2 = 1.0 + (m + 1.0) * b / (m * (n - 1.0) * w)
    return float(np.sqrt(r2))


def gelman_rubin_trace(chains, n_points: int = 20, min_length: int = 50):
    """R evaluated on growing chain prefixes (data for the BGR plot)."""
    seqs = [np.asarray(c, dtype=float) for c in chains]
    n = seqs[0].size
    ends = np.unique(np.linspace(max(min_length, 10), n, n_points).astype(int))
    rs = np.array([gelman_rubin_r([s[:e] for s in seqs]) for e in ends])
    return ends, rs


@dataclass(frozen=True)
class McError:
    naive: float
    batch_means: float


def mc_error(chain, n_batches: int = 30) -> McError:
    """Monte Carlo standard error of the chain mean.

    ``naive`` is sd/sqrt(N) (exact for iid draws); ``batch_means`` divides the
    chain into 30 batches and uses the batch-mean spread, which absorbs
    positive autocorrelation.
    """
    x = np.asarray(chain, dtype=float)
    if x.size < n_batches:
        raise ValueError(f"chain too short for {n_batches} batches ({x.size})")
    naive = float(x.std(ddof=1) / np.sqrt(x.size))
    blen = x.size // n_batches
    bm = x[: blen * n_batches].reshape(n_batches, blen).mean(axis=1)
    batch = float(bm.std(ddof=1) / np.sqrt(n_batches))
    return McError(naive=naive, batch_means=batch)


def autocorrelation(chain, max_lag: int):
    """Biased autocorrelation estimates {lag: rho} for lags 0..max_lag."""
    x = np.asarray(chain, dtype=float)
    if max_lag >= x.size / 2:
        raise ValueError("max_lag must be below half the chain length")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        return {k: (1.0 if k == 0 else 0.0) for k in range(max_lag + 1)}
    out = {0: 1.0}
    for k in range(1, max_lag + 1):
        out[k] = float(xc[:-k] @ xc[k:]) / denom
    return out


def pearson_residuals(spec: ModelSpec, data: Dataset, posterior) -> np.ndarray:
    """(y_i - E_hat_i) / sqrt(V_hat_i) with posterior-mean fitted moments.

    The fitted mean and variance per observation are the posterior averages of
    the model's closed-form moments over all retained draws (not the moments
    at the posterior-mean parameters).
    """
    evaluator = ModelEvaluator(spec, data)
    mean, var = evaluator.observation_moments(posterior.stacked())
    e_hat = mean.mean(axis=0)
    v_hat = var.mean(axis=0)
    if np.any(v_hat <= 0):
        raise ValueError(
            f"degenerate fitted variance at observations {np.nonzero(v_hat <= 0)[0]}"
        )
    return (data.y - e_hat) / np.sqrt(v_hat)


@dataclass
class DiagnosticsReport:
    """Per-parameter convergence measures plus per-observation residuals."""

    parameter_names: list
    geweke: dict
    r_hat: dict
    mc_errors: dict
    autocorrelations: dict
    residuals: np.ndarray | None
    notes: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "parameters": self.parameter_names,
            "geweke_z": self.geweke,
            "r_hat": self.r_hat,
            "mc_error": {
                k: {"naive": v.naive, "batch_means": v.batch_means}
                for k, v in self.mc_errors.items()
            },
            "autocorrelation": self.autocorrelations,
            "pearson_residuals": None
            if self.residuals is None
            else list(map(float, self.residuals)),
            "notes": self.notes,
        }


def diagnostics_report(
    spec: ModelSpec,
    data: Dataset | None,
    posterior,
    max_lag: int = 20,
) -> DiagnosticsReport:
    """Assemble the standard report from a fitted posterior.

    Geweke Z is computed on the first chain; R requires at least two chains
    and is otherwise omitted with an explanatory note; autocorrelations are
    averaged across chains.  Residuals need the dataset and are skipped when
    ``data`` is None.
    """
    names = list(posterior.parameter_names)
    draws = posterior.draws
    geweke = {}
    r_hat = {}
    mc_errors = {}
    acfs = {}
    notes = []
    for j, name in enumerate(names):
        geweke[name] = geweke_z(draws[0, :, j])
        mc_errors[name] = mc_error(draws[:, :, j].reshape(-1))
        per_chain = [autocorrelation(draws[c, :, j], max_lag) for c in range(draws.shape[0])]
        acfs[name] = {
            k: float(np.mean([a[k] for a in per_chain])) for k in per_chain[0]
        }
    if draws.shape[0] >= 2:
        for j, name in enumerate(names):
            r_hat[name] = gelman_rubin_r([draws[c, :, j] for c in range(draws.shape[0])])
    else:
        notes.append(
            "Brooks-Gelman-Rubin R omitted: it needs at least two chains, got 1."
        )
    residuals = None
    if data is not None:
        residuals = pearson_residuals(spec, data, posterior)
    return DiagnosticsReport(
        parameter_names=names,
        geweke=geweke,
        r_hat=r_hat,
        mc_errors=mc_errors,
        autocorrelations=acfs,
        residuals=residuals,
        notes=notes,
    )
