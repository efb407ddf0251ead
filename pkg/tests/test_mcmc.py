"""Sampler engine: priors, initial values, determinism, and target correctness."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expit

from tbbreg import mcmc
from tbbreg.mcmc import Block, PriorSpec, SamplerConfig
from tbbreg.regression import Dataset, Family, ModelSpec, ParameterVector


def ess(x):
    """Effective sample size via the initial-positive-sequence of the acf."""
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = float(xc @ xc)
    tau = 1.0
    for k in range(1, x.size // 2):
        rho = float(xc[:-k] @ xc[k:]) / denom
        if rho <= 0:
            break
        tau += 2.0 * rho
    return x.size / tau


class TestConfigValidation:
    def test_zero_retained_rejected(self):
        with pytest.raises(ValueError):
            SamplerConfig(iterations=100, burn_in=100, thin=1)

    def test_bad_thin(self):
        with pytest.raises(ValueError):
            SamplerConfig(iterations=100, burn_in=10, thin=0)

    def test_retained_count(self):
        cfg = SamplerConfig(iterations=100_000, burn_in=10_000, thin=10)
        assert cfg.retained_per_chain == 9000

    def test_prior_precision_positive(self):
        with pytest.raises(ValueError):
            PriorSpec(beta_precision=0.0)


class TestLogPosterior:
    def test_zero_params_equal_likelihood(self):
        data = Dataset(y=[4], m=[9], covariates={})
        spec = ModelSpec(Family.BETA_BINOMIAL, ("1",), ("1",))
        pv = ParameterVector(beta=[0.0], gamma=[0.0])
        from tbbreg.regression import log_likelihood

        assert mcmc.log_posterior(spec, data, PriorSpec(), pv) == pytest.approx(
            log_likelihood(spec, data, pv), abs=1e-12
        )

    def test_mu_t_outside_support(self):
        data = Dataset(y=[4], m=[9], covariates={})
        spec = ModelSpec(Family.TILTED_BETA_BINOMIAL, ("1",), ("1",), ("1",), "free")
        pv = ParameterVector(beta=[0.0], gamma=[0.0], delta=[0.0], mu_t=0.7)
        assert mcmc.log_posterior(spec, data, PriorSpec(), pv) == -math.inf

    def test_prior_kernel_ratio(self):
        # with no likelihood contribution the density ratio is the normal kernel
        spec = ModelSpec(Family.BINOMIAL, ("1",))
        prior = PriorSpec(beta_precision=0.25)
        p1 = ParameterVector(beta=[1.0])
        p2 = ParameterVector(beta=[2.0])
        diff = mcmc._log_prior(spec, prior, p1) - mcmc._log_prior(spec, prior, p2)
        assert diff == pytest.approx(-0.5 * 0.25 * (1.0 - 4.0), abs=1e-12)


class TestInitialValues:
    def test_zeros(self):
        spec = ModelSpec(Family.TILTED_BETA_BINOMIAL, ("1", "x1"), ("1",), ("1",), "free")
        pv = mcmc.initial_values(spec)
        assert np.all(pv.beta == 0) and np.all(pv.gamma == 0) and np.all(pv.delta == 0)
        assert pv.mu_t == 0.5

    def test_jittered_reproducible_and_distinct(self):
        spec = ModelSpec(Family.BETA_BINOMIAL, ("1", "x1"), ("1",))
        a = mcmc.initial_values(spec, strategy="jittered", rng=np.random.default_rng(4))
        b = mcmc.initial_values(spec, strategy="jittered", rng=np.random.default_rng(4))
        c = mcmc.initial_values(spec, strategy="jittered", rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a.beta, b.beta)
        assert not np.allclose(a.beta, c.beta)

    def test_jittered_needs_rng(self):
        spec = ModelSpec(Family.BINOMIAL, ("1",))
        with pytest.raises(ValueError):
            mcmc.initial_values(spec, strategy="jittered")

    def test_three_chains_distinct_starts(self):
        spec = ModelSpec(Family.BINOMIAL, ("1", "x1"))
        starts = [
            mcmc.initial_values(spec, strategy="jittered", rng=np.random.default_rng(7 + c)).beta
            for c in range(3)
        ]
        assert len({tuple(s) for s in starts}) == 3


class TestRandomWalkEngine:
    def test_gaussian_target_moments(self):
        # known 2-d Gaussian posterior: retained mean and covariance must agree
        # with the analytic values within 3 Monte Carlo standard errors
        mean = np.array([1.0, -2.0])
        cov = np.array([[1.0, 0.6], [0.6, 2.0]])
        prec = np.linalg.inv(cov)

        def target(x):
            d = x - mean
            lp = -0.5 * float(d @ prec @ d)
            return lp, lp

        cfg = SamplerConfig(iterations=60_000, burn_in=5_000, thin=1, chains=1, seed=123)
        blocks = [Block("pair", 0, 2, scale=1.0, target=0.234)]
        draws, _, _ = mcmc.run_random_walk(target, np.zeros(2), blocks, cfg, np.random.default_rng(123))

        for j in range(2):
            n_eff = ess(draws[:, j])
            se = math.sqrt(cov[j, j] / n_eff)
            assert abs(draws[:, j].mean() - mean[j]) < 3 * se
            se_var = cov[j, j] * math.sqrt(2.0 / n_eff)
            assert abs(draws[:, j].var(ddof=1) - cov[j, j]) < 3 * se_var
        n_eff = min(ess(draws[:, 0]), ess(draws[:, 1]))
        se_cov = math.sqrt((cov[0, 0] * cov[1, 1] + cov[0, 1] ** 2) / n_eff)
        sample_cov = np.cov(draws.T)[0, 1]
        assert abs(sample_cov - 0.6) < 3 * se_cov

    def test_acceptance_rate_near_target(self):
        def target(x):
            lp = -0.5 * float(x @ x)
            return lp, lp

        cfg = SamplerConfig(iterations=20_000, burn_in=4_000, thin=1, chains=1, seed=9)
        blk = Block("x", 0, 1, scale=10.0, target=0.44)
        mcmc.run_random_walk(target, np.zeros(1), [blk], cfg, np.random.default_rng(9))
        assert blk.accepted / blk.proposed == pytest.approx(0.44, abs=0.06)

    def test_nonfinite_start_reported(self):
        def target(x):
            return -math.inf, -math.inf

        cfg = SamplerConfig(iterations=100, burn_in=10, thin=1, chains=1, seed=0)
        with pytest.raises(mcmc.SamplerError, match="initial"):
            mcmc.run_random_walk(
                target, np.zeros(1), [Block("x", 0, 1, 1.0, 0.44)], cfg, np.random.default_rng(0)
            )

    def test_reflection_preserves_interval(self):
        lo, hi = 1.0 / 3.0, 2.0 / 3.0
        for x in [-5.3, 0.0, 0.34, 0.65, 1.7, 12.345]:
            assert lo <= mcmc._reflect(x, lo, hi) <= hi
        assert mcmc._reflect(0.5, lo, hi) == 0.5
        assert mcmc._reflect(hi + 0.01, lo, hi) == pytest.approx(hi - 0.01, abs=1e-12)


class TestRunChains:
    def _single_obs_binomial(self):
        data = Dataset(y=[7], m=[10], covariates={})
        spec = ModelSpec(Family.BINOMIAL, ("1",))
        return spec, data

    def test_conjugate_sanity_vs_quadrature(self):
        # exact posterior mean of expit(c1) for y=7, m=10 under the N(0, 10)
        # prior on the logit, by one-dimensional quadrature
        def unnorm(c):
            p = expit(c)
            return p**7 * (1 - p) ** 3 * np.exp(-0.05 * c * c)

        num = quad(lambda c: expit(c) * unnorm(c), -40, 40, limit=200)[0]
        den = quad(unnorm, -40, 40, limit=200)[0]
        exact = num / den
        assert exact == pytest.approx(0.6910, abs=5e-4)  # frozen from the oracle

        spec, data = self._single_obs_binomial()
        cfg = SamplerConfig(iterations=30_000, burn_in=3_000, thin=1, chains=2, seed=77)
        post = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        est = expit(post.stacked()[:, 0]).mean()
        assert est == pytest.approx(exact, abs=0.03)

    def test_determinism(self):
        spec, data = self._single_obs_binomial()
        cfg = SamplerConfig(iterations=2_000, burn_in=500, thin=2, chains=2, seed=31)
        a = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        b = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        np.testing.assert_array_equal(a.draws, b.draws)
        np.testing.assert_array_equal(a.deviance, b.deviance)

    def test_retained_shape_and_support(self):
        data = Dataset(y=[3, 8], m=[9, 12], covariates={})
        spec = ModelSpec(Family.TILTED_BETA_BINOMIAL, ("1",), ("1",), ("1",), "free")
        cfg = SamplerConfig(iterations=3_000, burn_in=1_000, thin=4, chains=2, seed=5)
        post = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        assert post.draws.shape == (2, cfg.retained_per_chain, 4)
        mu_t_col = post.parameter_names.index("mu_t")
        assert np.all(post.draws[:, :, mu_t_col] > 1 / 3)
        assert np.all(post.draws[:, :, mu_t_col] < 2 / 3)
        assert np.all(np.isfinite(post.deviance))

    def test_adaptation_frozen_after_burn_in(self):
        spec, data = self._single_obs_binomial()
        cfg = SamplerConfig(iterations=4_000, burn_in=2_000, thin=1, chains=1, seed=3)
        post = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        # every retained snapshot of the proposal scales is identical
        assert np.all(post.scale_trace == post.scale_trace[:, :1, :])

    def test_zero_retained_config_error(self):
        with pytest.raises(ValueError):
            SamplerConfig(iterations=1_000, burn_in=1_000, thin=1)

    def test_deviance_trace_matched_to_draws(self):
        from tbbreg import regression

        spec, data = self._single_obs_binomial()
        cfg = SamplerConfig(iterations=1_500, burn_in=500, thin=5, chains=1, seed=13)
        post = mcmc.run_chains(spec, data, PriorSpec(), cfg)
        k = 17
        pv = ParameterVector.from_stacked(spec, post.draws[0, k])
        assert post.deviance[0, k] == pytest.approx(
            regression.deviance(spec, data, pv), abs=1e-10
        )
