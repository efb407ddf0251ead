"""Regression structures and exact log-likelihoods for the four model families.

A :class:`ModelSpec` names which covariates enter each of the three linear
predictors: mean of the beta component (logit link), dispersion (log link),
and mixture weight (logit link), plus how the tilted mean is handled.  Term
strings are ``"1"`` for an intercept, a bare covariate name, or
``name+shift`` / ``name-shift`` for a constant offset of a stored column
(e.g. ``"x1+1"`` turns 0/1 coding into 1/2 coding without touching the data).

The per-observation log-likelihood is the mixture
``log[theta_i * f_tilted(y_i) + (1 - theta_i) * f_betabinomial(y_i)]``,
evaluated with log-sum-exp; families without a mixture or dispersion drop the
corresponding pieces.  A non-finite result is returned as ``-inf`` so the
sampler can treat it as a rejection rather than an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from tbbreg import distributions as dist

__all__ = [
    "Family",
    "ModelSpec",
    "Dataset",
    "ParameterVector",
    "LinearPredictors",
    "ModelEvaluator",
    "parameter_names",
    "build_design",
    "linear_predictors",
    "log_likelihood",
    "deviance",
]

MU_CLAMP = 1e-6

_MU_T_FREE = "free"


class Family(str, Enum):
    BINOMIAL = "binomial"
    BETA_BINOMIAL = "beta_binomial"
    BETA_RECTANGULAR_BINOMIAL = "beta_rectangular_binomial"
    TILTED_BETA_BINOMIAL = "tilted_beta_binomial"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "bin": cls.BINOMIAL,
            "binomial": cls.BINOMIAL,
            "bb": cls.BETA_BINOMIAL,
            "beta_binomial": cls.BETA_BINOMIAL,
            "brb": cls.BETA_RECTANGULAR_BINOMIAL,
            "beta_rectangular_binomial": cls.BETA_RECTANGULAR_BINOMIAL,
            "tbb": cls.TILTED_BETA_BINOMIAL,
            "tilted_beta_binomial": cls.TILTED_BETA_BINOMIAL,
        }
        if key not in aliases:
            raise ValueError(f"unknown family {name!r}; expected one of {sorted(aliases)}")
        return aliases[key]

    @property
    def short(self) -> str:
        return {
            Family.BINOMIAL: "Bin",
            Family.BETA_BINOMIAL: "BB",
            Family.BETA_RECTANGULAR_BINOMIAL: "BRB",
            Family.TILTED_BETA_BINOMIAL: "TBB",
        }[self]

    @property
    def has_phi(self) -> bool:
        return self is not Family.BINOMIAL

    @property
    def has_theta(self) -> bool:
        return self in (Family.BETA_RECTANGULAR_BINOMIAL, Family.TILTED_BETA_BINOMIAL)


_TERM_RE = re.compile(
    r"^\s*(?:(?P<one>1)|(?P<name>[A-Za-z_]\w*)\s*(?P<shift>[+-]\s*\d+(?:\.\d+)?)?)\s*$"
)


def _parse_term(term: str):
    m = _TERM_RE.match(term)
    if m is None:
        raise ValueError(
            f"bad term {term!r}: expected '1', a covariate name, or name+shift"
        )
    if m.group("one"):
        return None, 0.0
    shift = m.group("shift")
    return m.group("name"), float(shift.replace(" ", "")) if shift else 0.0


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one regression model."""

    family: Family
    mu_b_terms: tuple = ("1",)
    phi_terms: tuple = ()
    theta_terms: tuple = ()
    mu_t: object = None  # None, "free", or a fixed float in (1/3, 2/3)

    def __post_init__(self):
        object.__setattr__(self, "mu_b_terms", tuple(self.mu_b_terms))
        object.__setattr__(self, "phi_terms", tuple(self.phi_terms))
        object.__setattr__(self, "theta_terms", tuple(self.theta_terms))
        if not self.mu_b_terms:
            raise ValueError("mu_b_terms must contain at least one term")
        if self.family.has_phi:
            if not self.phi_terms:
                object.__setattr__(self, "phi_terms", ("1",))
        elif self.phi_terms:
            raise ValueError(f"{self.family.value} has no dispersion structure")
        if self.family.has_theta:
            if not self.theta_terms:
                object.__setattr__(self, "theta_terms", ("1",))
        elif self.theta_terms:
            raise ValueError(f"{self.family.value} has no mixture-weight structure")
        if self.family is Family.TILTED_BETA_BINOMIAL:
            mt = _MU_T_FREE if self.mu_t is None else self.mu_t
            if mt != _MU_T_FREE:
                mt = float(mt)
                if not dist.MU_T_LO < mt < dist.MU_T_HI:
                    raise ValueError(f"fixed mu_t must lie in (1/3, 2/3), got {mt}")
            object.__setattr__(self, "mu_t", mt)
        elif self.family is Family.BETA_RECTANGULAR_BINOMIAL:
            if self.mu_t not in (None, 0.5):
                raise ValueError("the beta rectangular binomial pins mu_t at 1/2")
            object.__setattr__(self, "mu_t", 0.5)
        elif self.mu_t is not None:
            raise ValueError(f"{self.family.value} has no tilted component")
        for term in self.mu_b_terms + self.phi_terms + self.theta_terms:
            _parse_term(term)

    @property
    def mu_t_is_free(self) -> bool:
        return self.mu_t == _MU_T_FREE

    @property
    def n_beta(self) -> int:
        return len(self.mu_b_terms)

    @property
    def n_gamma(self) -> int:
        return len(self.phi_terms)

    @property
    def n_delta(self) -> int:
        return len(self.theta_terms)

    @property
    def n_params(self) -> int:
        return self.n_beta + self.n_gamma + self.n_delta + (1 if self.mu_t_is_free else 0)

    def covariate_names(self):
        names = []
        for term in self.mu_b_terms + self.phi_terms + self.theta_terms:
            name, _ = _parse_term(term)
            if name is not None and name not in names:
                names.append(name)
        return names


@dataclass(frozen=True)
class Dataset:
    """Counts y out of m trials plus named real covariate columns."""

    y: np.ndarray
    m: np.ndarray
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=int)
        m = np.asarray(self.m, dtype=int)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)
        if y.ndim != 1 or m.shape != y.shape:
            raise ValueError("y and m must be one-dimensional and the same length")
        if y.size == 0:
            raise ValueError("dataset is empty")
        if np.any(m < 1):
            raise ValueError("every trial count m must be >= 1")
        if np.any((y < 0) | (y > m)):
            bad = int(np.argmax((y < 0) | (y > m)))
            raise ValueError(f"row {bad}: count y={y[bad]} outside [0, m={m[bad]}]")
        covs = {k: np.asarray(v, dtype=float) for k, v in self.covariates.items()}
        for k, v in covs.items():
            if v.shape != y.shape:
                raise ValueError(f"covariate {k!r} has length {v.size}, expected {y.size}")
        object.__setattr__(self, "covariates", covs)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class ParameterVector:
    """Stacked coefficients (beta | gamma | delta | mu_t) on the sampling scale."""

    beta: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mu_t: float | None = None

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float)) if np.size(self.gamma) else np.zeros(0)
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float)) if np.size(self.delta) else np.zeros(0)
        if self.mu_t is not None:
            self.mu_t = float(self.mu_t)

    def stacked(self) -> np.ndarray:
        parts = [self.beta, self.gamma, self.delta]
        if self.mu_t is not None:
            parts.append(np.array([self.mu_t]))
        return np.concatenate(parts)

    @classmethod
    def from_stacked(cls, spec: ModelSpec, x: np.ndarray) -> "ParameterVector":
        x = np.asarray(x, dtype=float)
        s, k, l = spec.n_beta, spec.n_gamma, spec.n_delta
        expected = spec.n_params
        if x.size != expected:
            raise ValueError(f"expected {expected} stacked values, got {x.size}")
        mu_t = float(x[-1]) if spec.mu_t_is_free else (
            spec.mu_t if isinstance(spec.mu_t, float) else None
        )
        return cls(
            beta=x[:s],
            gamma=x[s : s + k],
            delta=x[s + k : s + k + l],
            mu_t=mu_t,
        )


def parameter_names(spec: ModelSpec):
    """Sampling-order names: c* for mu_b, a* for phi, b* for theta, then mu_t."""
    names = [f"c{i + 1}" for i in range(spec.n_beta)]
    names += [f"a{i + 1}" for i in range(spec.n_gamma)]
    names += [f"b{i + 1}" for i in range(spec.n_delta)]
    if spec.mu_t_is_free:
        names.append("mu_t")
    return names


def build_design(terms, data: Dataset) -> np.ndarray:
    """Design matrix (n x len(terms)) for a list of term strings."""
    cols = []
    for term in terms:
        name, shift = _parse_term(term)
        if name is None:
            cols.append(np.ones(data.n))
        else:
            if name not in data.covariates:
                raise ValueError(
                    f"term {term!r} references unknown covariate {name!r}; "
                    f"dataset has {sorted(data.covariates)}"
                )
            cols.append(data.covariates[name] + shift)
    return np.column_stack(cols)


def _log_expit(x):
    # log(expit(x)) without losing precision for large |x|
    return -np.logaddexp(0.0, -x)


@dataclass(frozen=True)
class LinearPredictors:
    """Per-observation parameter values implied by a coefficient vector."""

    mu_b: np.ndarray
    phi: np.ndarray | None
    theta: np.ndarray | None
    mu_t: float | None


class ModelEvaluator:
    """Caches design matrices and per-observation constants for fast evaluation.

    The Metropolis sampler calls :meth:`log_likelihood` hundreds of thousands
    of times; everything that depends only on (spec, data) is precomputed
    here.

    The beta binomial term is evaluated through the ascending-factorial
    identity ``log B(y+a, m-y+b) - log B(a, b) = sum_j log(a+j) + sum_j
    log(b+j) - sum_j log(a+b+j)`` rather than through log-gamma differences:
    the dispersion phi = exp(z'gamma) can reach magnitudes where
    ``gammaln(y + a) - gammaln(a)`` loses every significant digit to
    cancellation, while the product form is exact for any phi, so the
    binomial-limit plateau of the posterior is sampled faithfully.
    """

    def __init__(self, spec: ModelSpec, data: Dataset):
        self.spec = spec
        self.data = data
        self.X = build_design(spec.mu_b_terms, data)
        self.Z = build_design(spec.phi_terms, data) if spec.family.has_phi else None
        self.W = build_design(spec.theta_terms, data) if spec.family.has_theta else None
        self.y = data.y.astype(float)
        self.m = data.m.astype(float)
        self.log_choose = dist.log_choose(data.m, data.y)
        n = data.n
        if spec.family.has_phi:
            # flattened (observation, offset) pairs for the three factorial sums
            self._a_idx = np.repeat(np.arange(n), data.y)
            self._a_off = np.concatenate([np.arange(k) for k in data.y]) if data.y.sum() else np.zeros(0)
            self._b_idx = np.repeat(np.arange(n), data.m - data.y)
            self._b_off = np.concatenate([np.arange(k) for k in data.m - data.y])
            self._ab_idx = np.repeat(np.arange(n), data.m)
            self._ab_off = np.concatenate([np.arange(k) for k in data.m])
        if spec.family.has_theta:
            # constants of the tilted component's closed-form log mass
            self._tilted_const = (
                np.log(2.0)
                + self.log_choose
                + dist._log_beta_int(data.y + 1, data.m - data.y + 1)
                - np.log(self.m + 2.0)
            )

    def _beta_binomial_terms(self, a, b):
        n = self.data.n
        la = np.bincount(
            self._a_idx, weights=np.log(a[self._a_idx] + self._a_off), minlength=n
        )
        lb = np.bincount(
            self._b_idx, weights=np.log(b[self._b_idx] + self._b_off), minlength=n
        )
        lab = np.bincount(
            self._ab_idx,
            weights=np.log(a[self._ab_idx] + b[self._ab_idx] + self._ab_off),
            minlength=n,
        )
        return self.log_choose + la + lb - lab

    # -- per-observation parameter values -----------------------------------

    def predictors(self, params: ParameterVector) -> LinearPredictors:
        if params.beta.size != self.spec.n_beta:
            raise ValueError(
                f"beta has length {params.beta.size}, spec wants {self.spec.n_beta}"
            )
        mu = _clamped_expit(self.X @ params.beta)
        phi = theta = None
        if self.Z is not None:
            if params.gamma.size != self.spec.n_gamma:
                raise ValueError(
                    f"gamma has length {params.gamma.size}, spec wants {self.spec.n_gamma}"
                )
            phi = np.exp(self.Z @ params.gamma)
        if self.W is not None:
            if params.delta.size != self.spec.n_delta:
                raise ValueError(
                    f"delta has length {params.delta.size}, spec wants {self.spec.n_delta}"
                )
            theta = _expit(self.W @ params.delta)
        mu_t = params.mu_t if self.spec.family is Family.TILTED_BETA_BINOMIAL else (
            0.5 if self.spec.family is Family.BETA_RECTANGULAR_BINOMIAL else None
        )
        if self.spec.family is Family.TILTED_BETA_BINOMIAL and not self.spec.mu_t_is_free:
            mu_t = self.spec.mu_t
        return LinearPredictors(mu_b=mu, phi=phi, theta=theta, mu_t=mu_t)

    # -- log-likelihood -------------------------------------------------------

    def log_likelihood(self, params: ParameterVector) -> float:
        mu_t = params.mu_t
        if self.spec.family is Family.TILTED_BETA_BINOMIAL and not self.spec.mu_t_is_free:
            mu_t = self.spec.mu_t
        return self.log_likelihood_raw(params.beta, params.gamma, params.delta, mu_t)

    def log_likelihood_raw(self, beta, gamma, delta, mu_t) -> float:
        """Same as :meth:`log_likelihood` on bare coefficient arrays (hot path)."""
        f = self.spec.family
        mu = _clamped_expit(self.X @ beta)
        if f is Family.BINOMIAL:
            ll = np.sum(
                self.log_choose + self.y * np.log(mu) + (self.m - self.y) * np.log1p(-mu)
            )
            return float(ll) if np.isfinite(ll) else -np.inf
        phi = np.exp(self.Z @ gamma)
        a = mu * phi
        b = (1.0 - mu) * phi
        lbb = self._beta_binomial_terms(a, b)
        if f is Family.BETA_BINOMIAL:
            ll = lbb.sum()
            return float(ll) if np.isfinite(ll) else -np.inf
        if f is Family.BETA_RECTANGULAR_BINOMIAL:
            mu_t = 0.5
        if not (dist.MU_T_LO <= mu_t <= dist.MU_T_HI):
            return -np.inf
        bracket = self.y * (6.0 * mu_t - 3.0) + self.m * (2.0 - 3.0 * mu_t) + 1.0
        lt = self._tilted_const + np.log(bracket)
        w = self.W @ delta
        ll = np.logaddexp(_log_expit(w) + lt, _log_expit(-w) + lbb).sum()
        return float(ll) if np.isfinite(ll) else -np.inf

    # -- fitted moments per observation ---------------------------------------

    def observation_moments(self, draws: np.ndarray):
        """Mean and variance of each observation for a batch of parameter draws.

        ``draws`` has shape (N, n_params) in stacked order; returns two
        (N, n_obs) arrays.
        """
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        s, k, l = self.spec.n_beta, self.spec.n_gamma, self.spec.n_delta
        mu = _clamped_expit(draws[:, :s] @ self.X.T)
        f = self.spec.family
        if f is Family.BINOMIAL:
            ep, vp = mu, np.zeros_like(mu)
        else:
            phi = np.exp(draws[:, s : s + k] @ self.Z.T)
            vb = mu * (1.0 - mu) / (1.0 + phi)
            if f is Family.BETA_BINOMIAL:
                ep, vp = mu, vb
            else:
                theta = _expit(draws[:, s + k : s + k + l] @ self.W.T)
                if f is Family.BETA_RECTANGULAR_BINOMIAL:
                    mu_t = 0.5
                elif self.spec.mu_t_is_free:
                    mu_t = draws[:, s + k + l : s + k + l + 1]
                else:
                    mu_t = self.spec.mu_t
                vt = mu_t * (1.0 - mu_t) - 1.0 / 6.0
                ep = theta * mu_t + (1.0 - theta) * mu
                vp = (
                    theta * vt
                    + (1.0 - theta) * vb
                    + theta * (1.0 - theta) * (mu_t - mu) ** 2
                )
        mean = self.m * ep
        var = self.m * ((self.m - 1.0) * vp + ep * (1.0 - ep))
        return mean, var


def _expit(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def _clamped_expit(x):
    return np.clip(_expit(x), MU_CLAMP, 1.0 - MU_CLAMP)


def linear_predictors(spec: ModelSpec, data: Dataset, params: ParameterVector) -> LinearPredictors:
    """Per-observation (mu_b, phi, theta, mu_t) for a coefficient vector."""
    return ModelEvaluator(spec, data).predictors(params)


def log_likelihood(spec: ModelSpec, data: Dataset, params: ParameterVector) -> float:
    """Exact observation-level log-likelihood; -inf signals a degenerate point."""
    return ModelEvaluator(spec, data).log_likelihood(params)


def deviance(spec: ModelSpec, data: Dataset, params: ParameterVector) -> float:
    """-2 times the log-likelihood (+inf when the likelihood degenerates)."""
    return -2.0 * log_likelihood(spec, data, params)
