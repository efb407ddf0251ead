"""Adaptive random-walk Metropolis-within-Gibbs sampler.

Each sweep updates the coefficient blocks in the fixed order
beta (mu_b structure) | gamma (phi) | delta (theta) | mu_t, proposing a
spherical Gaussian step per block and accepting by the Metropolis rule on the
log posterior.  Proposal scales are tuned only during burn-in, by a windowed
Robbins-Monro recursion on the log scale towards a target acceptance rate
(0.44 for scalar blocks, 0.234 otherwise), and frozen afterwards.  Proposals
for the tilted mean are reflected off the (1/3, 2/3) prior bounds, which keeps
the kernel symmetric.

Priors are independent zero-mean normals on all coefficients (precision form,
default 0.1, i.e. variance 10) and uniform on (1/3, 2/3) for the tilted mean.

Chains are mutually independent: chain ``j`` owns ``default_rng(seed + j)``
and starts from its own jittered initial values, so results are reproducible
bit for bit from the configuration alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from tbbreg import regression as reg
from tbbreg.regression import Dataset, Family, ModelSpec, ModelEvaluator, ParameterVector

__all__ = [
    "PriorSpec",
    "SamplerConfig",
    "PosteriorSample",
    "SamplerError",
    "log_posterior",
    "initial_values",
    "run_chains",
    "run_random_walk",
]

MU_T_BOUNDS = (1.0 / 3.0, 2.0 / 3.0)


class SamplerError(RuntimeError):
    """Raised for non-finite starting points or a block that never accepts."""


@dataclass(frozen=True)
class PriorSpec:
    """Normal prior precisions per coefficient block; mu_t is uniform (1/3, 2/3)."""

    beta_precision: float = 0.1
    gamma_precision: float = 0.1
    delta_precision: float = 0.1

    def __post_init__(self):
        for name in ("beta_precision", "gamma_precision", "delta_precision"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 100_000
    burn_in: int = 10_000
    thin: int = 10
    chains: int = 3
    seed: int = 0
    adapt_window: int = 50
    target_acceptance: float | None = None  # None: 0.44 scalar blocks, 0.234 otherwise

    def __post_init__(self):
        if self.burn_in < 0 or self.iterations <= 0:
            raise ValueError("iterations must be positive and burn_in nonnegative")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.target_acceptance is not None and not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")

    @property
    def retained_per_chain(self) -> int:
        return (self.iterations - self.burn_in + self.thin - 1) // self.thin


@dataclass
class PosteriorSample:
    """Retained draws per chain over the stacked parameter vector.

    ``draws`` has shape (chains, retained, n_params) in the sampling order
    given by ``parameter_names``; ``deviance`` is recorded at every retained
    draw; ``scale_trace`` snapshots the per-block proposal scales at the same
    points (constant after burn-in by construction).
    """

    parameter_names: list
    draws: np.ndarray
    deviance: np.ndarray
    acceptance: dict
    scale_trace: np.ndarray
    block_names: list
    config: SamplerConfig

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    def stacked(self) -> np.ndarray:
        """All chains concatenated: shape (chains * retained, n_params)."""
        return self.draws.reshape(-1, self.draws.shape[-1])

    def stacked_deviance(self) -> np.ndarray:
        return self.deviance.reshape(-1)

    def posterior_mean(self) -> np.ndarray:
        return self.stacked().mean(axis=0)


# ---------------------------------------------------------------------------
# Posterior density
# ---------------------------------------------------------------------------


def _log_prior(spec: ModelSpec, prior: PriorSpec, params: ParameterVector) -> float:
    lp = -0.5 * prior.beta_precision * float(params.beta @ params.beta)
    if params.gamma.size:
        lp += -0.5 * prior.gamma_precision * float(params.gamma @ params.gamma)
    if params.delta.size:
        lp += -0.5 * prior.delta_precision * float(params.delta @ params.delta)
    if spec.mu_t_is_free:
        if not MU_T_BOUNDS[0] < params.mu_t < MU_T_BOUNDS[1]:
            return -np.inf
    return lp


def log_posterior(
    spec: ModelSpec, data: Dataset, prior: PriorSpec, params: ParameterVector
) -> float:
    """Unnormalized log posterior; -inf outside the support."""
    lp = _log_prior(spec, prior, params)
    if not np.isfinite(lp):
        return -np.inf
    return lp + reg.log_likelihood(spec, data, params)


def initial_values(
    spec: ModelSpec,
    data: Dataset | None = None,
    strategy: str = "zeros",
    rng: np.random.Generator | None = None,
) -> ParameterVector:
    """Starting point: all-zero coefficients with mu_t = 1/2, or a jittered variant.

    ``jittered`` adds N(0, 0.5^2) noise to every coefficient and draws mu_t
    uniformly in (0.35, 0.65); it requires a caller-supplied generator.
    """
    beta = np.zeros(spec.n_beta)
    gamma = np.zeros(spec.n_gamma)
    delta = np.zeros(spec.n_delta)
    mu_t = 0.5 if spec.mu_t_is_free else (
        spec.mu_t if isinstance(spec.mu_t, float) else None
    )
    if strategy == "zeros":
        pass
    elif strategy == "jittered":
        if rng is None:
            raise ValueError("jittered initial values need an rng")
        beta = rng.normal(0.0, 0.5, spec.n_beta)
        gamma = rng.normal(0.0, 0.5, spec.n_gamma)
        delta = rng.normal(0.0, 0.5, spec.n_delta)
        if spec.mu_t_is_free:
            mu_t = rng.uniform(0.35, 0.65)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return ParameterVector(beta=beta, gamma=gamma, delta=delta, mu_t=mu_t)


# ---------------------------------------------------------------------------
# Random-walk engine
# ---------------------------------------------------------------------------


@dataclass
class Block:
    """One Metropolis block over a contiguous slice of the stacked vector."""

    name: str
    start: int
    size: int
    scale: float
    target: float
    reflect_bounds: tuple | None = None
    accepted: int = 0
    proposed: int = 0
    _window_accepts: int = 0
    _window_count: int = 0
    _windows_done: int = 0

    def adapt(self, accepted: bool, window: int):
        self._window_count += 1
        self._window_accepts += accepted
        if self._window_count >= window:
            self._windows_done += 1
            rate = self._window_accepts / self._window_count
            gain = min(1.0, 3.0 / self._windows_done**0.6)
            self.scale = float(self.scale * math.exp(gain * (rate - self.target)))
            # a reflected scalar wider than its interval is already a uniform
            # proposal; larger scales change nothing but invite overflow
            hi_cap = (
                self.reflect_bounds[1] - self.reflect_bounds[0]
                if self.reflect_bounds is not None
                else 50.0
            )
            self.scale = float(min(max(self.scale, 1e-8), hi_cap))
            self._window_accepts = 0
            self._window_count = 0


def _reflect(x: float, lo: float, hi: float) -> float:
    width = hi - lo
    t = (x - lo) % (2.0 * width)
    return lo + (t if t <= width else 2.0 * width - t)


def run_random_walk(
    target,
    x0: np.ndarray,
    blocks: list,
    config: SamplerConfig,
    rng: np.random.Generator,
):
    """Drive one chain of blockwise random-walk Metropolis.

    Parameters
    ----------
    target : callable
        Stacked vector -> (log posterior, log likelihood).  The first value
        drives the accept/reject decision (may be -inf); the second is
        recorded as -2*value (deviance) at every retained draw.  Synthetic
        targets can return the same value twice.
    x0 : ndarray
        Starting point (copied).
    blocks : list of Block
        Updated in the fixed list order within every sweep.
    config : SamplerConfig
        Only iterations/burn_in/thin/adapt_window are used here.
    rng : numpy Generator
        Owned by this chain.

    Returns (draws, deviance, scale_trace) plus per-block acceptance counts on
    the blocks themselves.
    """
    x = np.array(x0, dtype=float)
    lp, ll = target(x)
    if not np.isfinite(lp):
        raise SamplerError(f"initial log posterior is not finite at {x!r}")

    retained = config.retained_per_chain
    draws = np.empty((retained, x.size))
    devs = np.empty(retained)
    scale_trace = np.empty((retained, len(blocks)))
    keep = 0
    for it in range(config.iterations):
        adapting = it < config.burn_in
        for blk in blocks:
            sl = slice(blk.start, blk.start + blk.size)
            prop = x.copy()
            step = blk.scale * rng.standard_normal(blk.size)
            prop[sl] = x[sl] + step
            if blk.reflect_bounds is not None:
                lo, hi = blk.reflect_bounds
                prop[blk.start] = _reflect(prop[blk.start], lo, hi)
            lp_prop, ll_prop = target(prop)
            accept = lp_prop - lp > math.log(rng.random()) if lp_prop > -np.inf else False
            if accept:
                x = prop
                lp = lp_prop
                ll = ll_prop
            if adapting:
                blk.adapt(accept, config.adapt_window)
            else:
                blk.proposed += 1
                blk.accepted += accept
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            draws[keep] = x
            devs[keep] = -2.0 * ll
            scale_trace[keep] = [blk.scale for blk in blocks]
            keep += 1
    for blk in blocks:
        if blk.proposed and blk.accepted == 0:
            raise SamplerError(
                f"block {blk.name!r} accepted nothing after burn-in; "
                "the posterior may be degenerate or the starting point pathological"
            )
    return draws, devs, scale_trace


def _make_blocks(spec: ModelSpec, target_override: float | None):
    def target(size):
        if target_override is not None:
            return target_override
        return 0.44 if size == 1 else 0.234

    blocks = []
    pos = 0
    for name, size in (
        ("beta", spec.n_beta),
        ("gamma", spec.n_gamma),
        ("delta", spec.n_delta),
    ):
        if size:
            blocks.append(Block(name, pos, size, scale=0.5, target=target(size)))
            pos += size
    if spec.mu_t_is_free:
        blocks.append(
            Block(
                "mu_t",
                pos,
                1,
                scale=0.05,
                target=target(1),
                reflect_bounds=MU_T_BOUNDS,
            )
        )
    return blocks


def run_chains(
    spec: ModelSpec, data: Dataset, prior: PriorSpec, config: SamplerConfig
) -> PosteriorSample:
    """Fit a model by Metropolis-within-Gibbs; deterministic given the config seed."""
    evaluator = ModelEvaluator(spec, data)
    names = reg.parameter_names(spec)

    def make_target():
        s, k, l = spec.n_beta, spec.n_gamma, spec.n_delta
        bp, gp, dp = prior.beta_precision, prior.gamma_precision, prior.delta_precision
        free_mu_t = spec.mu_t_is_free
        fixed_mu_t = spec.mu_t if isinstance(spec.mu_t, float) else None

        def target(x):
            lp = -0.5 * bp * float(x[:s] @ x[:s])
            if k:
                lp -= 0.5 * gp * float(x[s : s + k] @ x[s : s + k])
            if l:
                lp -= 0.5 * dp * float(x[s + k : s + k + l] @ x[s + k : s + k + l])
            if free_mu_t and not MU_T_BOUNDS[0] < x[-1] < MU_T_BOUNDS[1]:
                return -np.inf, -np.inf
            ll = evaluator.log_likelihood_raw(
                x[:s],
                x[s : s + k],
                x[s + k : s + k + l],
                float(x[-1]) if free_mu_t else fixed_mu_t,
            )
            return lp + ll, ll

        return target

    target = make_target()
    all_draws = []
    all_devs = []
    all_scales = []
    acceptance = {}
    for chain in range(config.chains):
        rng = np.random.default_rng(config.seed + chain)
        start = initial_values(spec, data, strategy="jittered", rng=rng)
        parts = [start.beta, start.gamma, start.delta]
        if spec.mu_t_is_free:
            parts.append(np.array([start.mu_t]))
        x0 = np.concatenate(parts)
        blocks = _make_blocks(spec, config.target_acceptance)
        draws, devs, scales = run_random_walk(target, x0, blocks, config, rng)
        all_draws.append(draws)
        all_devs.append(devs)
        all_scales.append(scales)
        for blk in blocks:
            acceptance.setdefault(blk.name, []).append(
                blk.accepted / blk.proposed if blk.proposed else float("nan")
            )
    block_names = [blk.name for blk in _make_blocks(spec, config.target_acceptance)]
    return PosteriorSample(
        parameter_names=names,
        draws=np.stack(all_draws),
        deviance=np.stack(all_devs),
        acceptance={k: np.array(v) for k, v in acceptance.items()},
        scale_trace=np.stack(all_scales),
        block_names=block_names,
        config=config,
    )
