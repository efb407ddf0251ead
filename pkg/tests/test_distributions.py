"""Closed-form distributions against trivial identities and brute-force oracles."""

import math

import numpy as np
import pytest

from conftest import clip_open
from tbbreg import distributions as dist
from tbbreg import oracle

EPS = 1e-3
MU_T_GRID = [1 / 3 + EPS, 0.5, 2 / 3 - EPS]
THETA_GRID = [0.0, EPS, 1.0 - EPS, 1.0]
PHI_GRID = [0.1, 1.0, 100.0]


def pmf_vector(log_pmf, m):
    return np.exp([log_pmf(y) for y in range(m + 1)])


class TestTiltedDistribution:
    def test_uniform_at_half(self):
        assert dist.tilted_pdf(0.5, dist.TiltedParams(0.5)) == 1.0
        ys = np.linspace(0.01, 0.99, 23)
        np.testing.assert_allclose(dist.tilted_pdf(ys, dist.TiltedParams(0.5)), 1.0)

    def test_boundary_intercept(self):
        # at mu_t = 1/3 the density is 2 - 2y, hitting 2 at the left edge
        assert dist.tilted_pdf(1e-12, dist.TiltedParams(1 / 3)) == pytest.approx(2.0, abs=1e-9)

    @pytest.mark.parametrize("mu_t", MU_T_GRID + [1 / 3, 2 / 3])
    def test_normalization_by_quadrature(self, mu_t):
        p = dist.TiltedParams(mu_t)
        r = oracle.integrate_unit_interval(clip_open(lambda y: dist.tilted_pdf(y, p)), 1e-13, inset=0.0)
        assert r.value == pytest.approx(1.0, abs=1e-10)

    def test_pdf_nonnegative(self):
        ys = np.linspace(1e-9, 1 - 1e-9, 1001)
        for mu_t in MU_T_GRID:
            assert np.all(dist.tilted_pdf(ys, dist.TiltedParams(mu_t)) >= 0.0)

    def test_domain_errors(self):
        with pytest.raises(dist.DomainError):
            dist.tilted_pdf(0.0, dist.TiltedParams(0.5))
        with pytest.raises(dist.DomainError):
            dist.tilted_pdf(1.0, dist.TiltedParams(0.5))
        with pytest.raises(dist.DomainError):
            dist.TiltedParams(0.7)
        with pytest.raises(dist.DomainError):
            dist.TiltedParams(0.2)

    def test_first_moment_is_mean(self):
        assert dist.tilted_moment(1, dist.TiltedParams(0.45)) == pytest.approx(0.45, abs=1e-15)

    def test_uniform_second_moment(self):
        assert dist.tilted_moment(2, dist.TiltedParams(0.5)) == pytest.approx(1 / 3, abs=1e-15)

    @pytest.mark.parametrize("n", [1, 2, 3, 5])
    @pytest.mark.parametrize("mu_t", MU_T_GRID)
    def test_moments_vs_quadrature(self, n, mu_t):
        p = dist.TiltedParams(mu_t)
        q = oracle.integrate_unit_interval(
            clip_open(lambda y: y**n * dist.tilted_pdf(y, p)), 1e-13, inset=0.0
        ).value
        assert dist.tilted_moment(n, p) == pytest.approx(q, abs=1e-10)

    def test_variance_values(self):
        assert dist.tilted_variance(dist.TiltedParams(0.5)) == pytest.approx(1 / 12, abs=1e-15)
        assert dist.tilted_variance(dist.TiltedParams(1 / 3)) == pytest.approx(1 / 18, abs=1e-15)
        # the family is symmetric about 1/2, so both boundary means agree
        assert dist.tilted_variance(dist.TiltedParams(2 / 3)) == pytest.approx(
            dist.tilted_variance(dist.TiltedParams(1 / 3)), abs=1e-15
        )

    def test_variance_vs_quadrature(self):
        p = dist.TiltedParams(1 / 3)
        m1 = oracle.integrate_unit_interval(
            clip_open(lambda y: y * dist.tilted_pdf(y, p)), 1e-13, inset=0.0
        ).value
        m2 = oracle.integrate_unit_interval(
            clip_open(lambda y: y * y * dist.tilted_pdf(y, p)), 1e-13, inset=0.0
        ).value
        assert dist.tilted_variance(p) == pytest.approx(m2 - m1 * m1, abs=1e-10)


class TestBetaBinomial:
    def test_single_trial(self):
        p = dist.BetaMeanDisp(0.3, 2.0)
        assert dist.beta_binomial_log_pmf(0, 1, p) == pytest.approx(math.log(0.7), abs=1e-12)
        assert dist.beta_binomial_log_pmf(1, 1, p) == pytest.approx(math.log(0.3), abs=1e-12)

    def test_normalization(self):
        p = dist.BetaMeanDisp(0.2, 5.0)
        assert pmf_vector(lambda y: dist.beta_binomial_log_pmf(y, 25, p), 25).sum() == pytest.approx(
            1.0, abs=1e-12
        )

    def test_vs_quadrature(self):
        # mixture with theta=0 isolates the beta binomial factor
        q = oracle.mixed_binomial_pmf_by_quadrature(3, 10, (0.5, 0.4, 3.0, 0.0))
        closed = math.exp(dist.beta_binomial_log_pmf(3, 10, dist.BetaMeanDisp(0.4, 3.0)))
        assert closed == pytest.approx(q, abs=1e-9)

    def test_domain_errors(self):
        p = dist.BetaMeanDisp(0.3, 2.0)
        with pytest.raises(dist.DomainError):
            dist.beta_binomial_log_pmf(11, 10, p)
        with pytest.raises(dist.DomainError):
            dist.beta_binomial_log_pmf(-1, 10, p)
        with pytest.raises(dist.DomainError):
            dist.BetaMeanDisp(0.0, 1.0)
        with pytest.raises(dist.DomainError):
            dist.BetaMeanDisp(0.5, 0.0)


class TestTiltedBeta:
    def test_collapses_to_beta(self):
        p = dist.TiltedBetaParams(dist.TiltedParams(0.6), dist.BetaMeanDisp(0.3, 4.0), 0.0)
        ys = np.linspace(0.05, 0.95, 19)
        np.testing.assert_allclose(
            dist.tilted_beta_pdf(ys, p), dist._beta_pdf(ys, p.beta), rtol=0, atol=0
        )

    def test_pure_uniform_component(self):
        p = dist.TiltedBetaParams(dist.TiltedParams(0.5), dist.BetaMeanDisp(0.3, 4.0), 1.0)
        ys = np.linspace(0.01, 0.99, 17)
        np.testing.assert_allclose(dist.tilted_beta_pdf(ys, p), 1.0)

    def test_normalization_by_quadrature(self):
        # shapes 9 and 21 are smooth enough to integrate the mixture directly
        p = dist.TiltedBetaParams(dist.TiltedParams(0.6), dist.BetaMeanDisp(0.3, 30.0), 0.25)
        r = oracle.integrate_unit_interval(
            clip_open(lambda y: dist.tilted_beta_pdf(y, p)), 1e-12, inset=0.0
        )
        assert r.value == pytest.approx(1.0, abs=1e-10)

    @pytest.mark.parametrize("phi", [0.1, 1.0, 4.0])
    def test_normalization_with_singular_beta_component(self, phi):
        # small shapes make the beta factor stall a plain panel rule, so the
        # mixture mass is assembled from the tilted part plus the
        # kernel-weighted beta part
        p = dist.TiltedBetaParams(dist.TiltedParams(0.6), dist.BetaMeanDisp(0.3, phi), 0.25)
        t_mass = oracle.integrate_unit_interval(
            clip_open(lambda y: dist.tilted_pdf(y, p.tilted)), 1e-13, inset=0.0
        ).value
        b_mass = math.exp(
            oracle.integrate_beta_weighted(None, p.beta.shape_a, p.beta.shape_b).log_value
            - (math.lgamma(p.beta.shape_a) + math.lgamma(p.beta.shape_b)
               - math.lgamma(p.beta.shape_a + p.beta.shape_b))
        )
        assert 0.25 * t_mass + 0.75 * b_mass == pytest.approx(1.0, abs=1e-10)

    def test_mean_endpoints(self):
        tb = lambda th: dist.TiltedBetaParams(dist.TiltedParams(0.6), dist.BetaMeanDisp(0.2, 3.0), th)
        assert dist.tilted_beta_mean(tb(1.0)) == pytest.approx(0.6, abs=1e-15)
        assert dist.tilted_beta_mean(tb(0.0)) == pytest.approx(0.2, abs=1e-15)

    def test_variance_endpoints(self):
        beta = dist.BetaMeanDisp(0.2, 3.0)
        pure_beta = dist.TiltedBetaParams(dist.TiltedParams(0.6), beta, 0.0)
        assert dist.tilted_beta_variance(pure_beta) == pytest.approx(
            0.2 * 0.8 / 4.0, abs=1e-15
        )
        pure_unif = dist.TiltedBetaParams(dist.TiltedParams(0.5), beta, 1.0)
        assert dist.tilted_beta_variance(pure_unif) == pytest.approx(1 / 12, abs=1e-15)

    def test_moments_vs_quadrature(self):
        # the sign of the (mu_t - mu_b)^2 cross term is settled here
        p = dist.TiltedBetaParams(dist.TiltedParams(0.6), dist.BetaMeanDisp(0.2, 3.0), 0.5)
        a, b = p.beta.shape_a, p.beta.shape_b

        def mix_moment(order):
            t = oracle.integrate_unit_interval(
                clip_open(lambda y: y**order * dist.tilted_pdf(y, p.tilted)),
                1e-13,
                inset=0.0,
            ).value
            num = oracle.integrate_beta_weighted(lambda y: y**order, a, b).value
            den = oracle.integrate_beta_weighted(None, a, b).value
            return 0.5 * t + 0.5 * num / den

        m1 = mix_moment(1)
        m2 = mix_moment(2)
        assert dist.tilted_beta_mean(p) == pytest.approx(m1, abs=1e-10)
        assert dist.tilted_beta_variance(p) == pytest.approx(m2 - m1 * m1, abs=1e-10)


class TestTbbPmf:
    def test_theta_zero_is_beta_binomial(self):
        beta = dist.BetaMeanDisp(0.35, 2.0)
        p = dist.tbb_params(0.45, 0.35, 2.0, 0.0, 15)
        for y in range(16):
            assert dist.tbb_log_pmf(y, p) == dist.beta_binomial_log_pmf(y, 15, beta)

    def test_single_trial_uniform_component(self):
        # integral of Bin(1, p) against the uniform mixing density is 1/2
        p = dist.tbb_params(0.5, 0.3, 2.0, 1.0, 1)
        q = oracle.mixed_binomial_pmf_by_quadrature(0, 1, (0.5, 0.3, 2.0, 1.0))
        assert q == pytest.approx(0.5, abs=1e-10)
        assert dist.tbb_log_pmf(0, p) == pytest.approx(math.log(0.5), abs=1e-12)

    @pytest.mark.parametrize("mu_t", MU_T_GRID)
    @pytest.mark.parametrize("theta", THETA_GRID)
    @pytest.mark.parametrize("phi", PHI_GRID)
    def test_normalization_grid(self, mu_t, theta, phi):
        p = dist.tbb_params(mu_t, 0.6, phi, theta, 20)
        assert pmf_vector(lambda y: dist.tbb_log_pmf(y, p), 20).sum() == pytest.approx(
            1.0, abs=1e-11
        )

    def test_every_mass_in_unit_interval(self):
        for mu_t, theta, phi in [(0.4, 0.3, 5.0), (1 / 3 + EPS, 0.999, 0.1), (0.5, 0.0, 100.0)]:
            p = dist.tbb_params(mu_t, 0.6, phi, theta, 20)
            masses = pmf_vector(lambda y: dist.tbb_log_pmf(y, p), 20)
            assert np.all(masses >= 0.0) and np.all(masses <= 1.0)

    def test_domain_error(self):
        p = dist.tbb_params(0.5, 0.3, 2.0, 0.5, 7)
        with pytest.raises(dist.DomainError):
            dist.tbb_log_pmf(8, p)

    def test_closed_form_vs_compound_quadrature(self):
        p = dist.tbb_params(0.55, 0.35, 2.5, 0.4, 8)
        for y in range(9):
            q = oracle.mixed_binomial_pmf_by_quadrature(y, 8, (0.55, 0.35, 2.5, 0.4))
            assert math.exp(dist.tbb_log_pmf(y, p)) == pytest.approx(q, abs=1e-9)


class TestBrbPmf:
    def test_is_tbb_at_half(self):
        beta = dist.BetaMeanDisp(0.25, 8.0)
        p = dist.tbb_params(0.5, 0.25, 8.0, 0.6, 12)
        for y in range(13):
            assert dist.brb_log_pmf(y, 12, beta, 0.6) == dist.tbb_log_pmf(y, p)

    def test_pure_uniform_mixing(self):
        beta = dist.BetaMeanDisp(0.3, 2.0)
        masses = pmf_vector(lambda y: dist.brb_log_pmf(y, 4, beta, 1.0), 4)
        np.testing.assert_allclose(masses, 0.2, rtol=0, atol=1e-14)

    def test_normalization(self):
        beta = dist.BetaMeanDisp(0.25, 8.0)
        assert pmf_vector(lambda y: dist.brb_log_pmf(y, 12, beta, 0.6), 12).sum() == pytest.approx(
            1.0, abs=1e-11
        )

    def test_theta_zero_reduction(self):
        beta = dist.BetaMeanDisp(0.25, 8.0)
        for y in range(13):
            assert dist.brb_log_pmf(y, 12, beta, 0.0) == dist.beta_binomial_log_pmf(y, 12, beta)


class TestTbbMoments:
    def test_mean_value(self):
        p = dist.tbb_params(0.5, 0.2, 3.0, 0.3, 10)
        assert dist.tbb_mean(p) == pytest.approx(2.9, abs=1e-12)

    def test_mean_vs_monte_carlo(self):
        p = dist.tbb_params(0.5, 0.2, 3.0, 0.3, 10)
        rng = np.random.default_rng(42)
        draws = dist.sample_tbb(p, rng, size=1_000_000)
        se = math.sqrt(dist.tbb_variance(p) / draws.size)
        assert abs(draws.mean() - 2.9) < 3 * se

    def test_mean_reductions(self):
        p0 = dist.tbb_params(0.5, 0.2, 3.0, 0.0, 10)
        assert dist.tbb_mean(p0) == pytest.approx(10 * 0.2, abs=1e-14)
        p1 = dist.tbb_params(0.6, 0.2, 3.0, 0.4, 1)
        assert dist.tbb_mean(p1) == pytest.approx(dist.tilted_beta_mean(p1.mix), abs=1e-15)

    def test_binomial_limit_variance(self):
        p = dist.tbb_params(0.5, 0.3, 1e8, 0.0, 10)
        assert dist.tbb_variance(p) == pytest.approx(2.1, abs=1e-4)

    def test_variance_vs_summation(self):
        p = dist.tbb_params(0.4, 0.6, 5.0, 0.3, 20)
        lp = lambda y: dist.tbb_log_pmf(y, p)
        m1 = oracle.pmf_moment_by_summation(lp, 20, 1)
        m2 = oracle.pmf_moment_by_summation(lp, 20, 2)
        assert dist.tbb_mean(p) == pytest.approx(m1, abs=1e-9)
        assert dist.tbb_variance(p) == pytest.approx(m2 - m1 * m1, abs=1e-9)

    def test_single_trial_variance(self):
        p = dist.tbb_params(0.6, 0.2, 3.0, 0.4, 1)
        ep = dist.tilted_beta_mean(p.mix)
        assert dist.tbb_variance(p) == pytest.approx(ep * (1 - ep), abs=1e-15)

    @pytest.mark.parametrize("mu_t", MU_T_GRID)
    @pytest.mark.parametrize("theta", THETA_GRID)
    @pytest.mark.parametrize("phi", PHI_GRID)
    def test_never_underdispersed(self, mu_t, theta, phi):
        p = dist.tbb_params(mu_t, 0.3, phi, theta, 17)
        ep = dist.tilted_beta_mean(p.mix)
        assert dist.tbb_variance(p) >= 17 * ep * (1 - ep) - 1e-12


class TestSamplers:
    def test_tilted_uniform_case_ks(self):
        rng = np.random.default_rng(7)
        draws = dist.sample_tilted(dist.TiltedParams(0.5), rng, size=100_000)
        sorted_d = np.sort(draws)
        grid = (np.arange(draws.size) + 0.5) / draws.size
        ks = np.max(np.abs(sorted_d - grid))
        assert ks < 1.36 / math.sqrt(draws.size)  # 95% critical value

    def test_tilted_mean(self):
        rng = np.random.default_rng(3)
        p = dist.TiltedParams(0.4)
        draws = dist.sample_tilted(p, rng, size=1_000_000)
        se = math.sqrt(dist.tilted_variance(p) / draws.size)
        assert abs(draws.mean() - 0.4) < 3 * se

    def test_tilted_open_interval(self):
        rng = np.random.default_rng(11)
        for mu_t in MU_T_GRID:
            draws = dist.sample_tilted(dist.TiltedParams(mu_t), rng, size=50_000)
            assert np.all((draws > 0.0) & (draws < 1.0))

    def test_tbb_empirical_pmf(self):
        p = dist.tbb_params(0.45, 0.3, 4.0, 0.2, 10)
        rng = np.random.default_rng(5)
        n = 1_000_000
        draws = dist.sample_tbb(p, rng, size=n)
        emp = np.bincount(draws, minlength=11) / n
        exact = pmf_vector(lambda y: dist.tbb_log_pmf(y, p), 10)
        band = 4.0 * np.sqrt(exact * (1 - exact) / n)
        assert np.all(np.abs(emp - exact) < band)

    def test_tbb_binomial_limit_mean(self):
        p = dist.tbb_params(0.5, 0.3, 1e8, 0.0, 12)
        rng = np.random.default_rng(9)
        draws = dist.sample_tbb(p, rng, size=200_000)
        assert draws.mean() == pytest.approx(12 * 0.3, abs=0.05)

    def test_tbb_single_trial_support(self):
        p = dist.tbb_params(0.6, 0.3, 2.0, 0.5, 1)
        rng = np.random.default_rng(1)
        draws = dist.sample_tbb(p, rng, size=1000)
        assert set(np.unique(draws)) <= {0, 1}

    def test_scalar_draw_types(self):
        rng = np.random.default_rng(0)
        assert isinstance(dist.sample_tilted(dist.TiltedParams(0.4), rng), float)
        assert isinstance(dist.sample_tbb(dist.tbb_params(0.4, 0.3, 2.0, 0.2, 6), rng), int)
