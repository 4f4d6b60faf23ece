import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpprovision.dp_core import (
    BETA_MAX, BitDatabase, adversarial_database, are_neighbors, bias_correction,
    centered_uniforms, cohort_size,
    dp_certificate, empirical_accuracy, epsilon_for, gr_publish, laplace_from_uniform,
    laplace_sample, log_density_ratio, make_accuracy_target, make_rng, required_cohort,
    true_statistic,
)
from dpprovision.errors import CohortSizeError, DomainError, ShapeError

alphas = st.floats(min_value=1e-3, max_value=0.999)
betas = st.floats(min_value=1e-6, max_value=BETA_MAX * (1 - 1e-9))


def independent_m(beta):
    # 1/2 + ln(1/beta), written out from logs in base 10 to avoid sharing code paths
    return 0.5 + math.log10(1.0 / beta) / math.log10(math.e)


class TestAccuracyTarget:
    def test_m_for_reference_targets(self):
        assert make_accuracy_target(0.2, 0.1).m == pytest.approx(2.802585092994046, rel=1e-15)
        assert make_accuracy_target(0.4, 1 / 3).m == pytest.approx(1.598612288668110, rel=1e-15)

    @pytest.mark.parametrize("alpha, beta", [(0.2, 0.5), (0.0, 0.1), (1.0, 0.1), (0.2, 0.0),
                                             (0.2, BETA_MAX), (float("nan"), 0.1)])
    def test_rejects_out_of_range(self, alpha, beta):
        with pytest.raises(DomainError):
            make_accuracy_target(alpha, beta)

    def test_beta_bound(self):
        assert BETA_MAX == pytest.approx(1.0 / (1.0 + math.exp(0.5)), rel=1e-15)


class TestProduction:
    @pytest.mark.parametrize("alpha, beta, expected", [
        (0.2, 0.1, 0.0140129),
        (0.05, 0.05, 0.0699146),
        (0.4, 1 / 3, 0.0039965),
    ])
    def test_epsilon_reference(self, alpha, beta, expected):
        eps = epsilon_for(make_accuracy_target(alpha, beta), 1000)
        assert eps == pytest.approx(expected, abs=5e-8)

    @pytest.mark.parametrize("alpha, beta, expected", [
        (0.2, 0.1, 928.64), (0.4, 1 / 3, 749.78), (0.05, 0.05, 985.69),
    ])
    def test_cohort_reference(self, alpha, beta, expected):
        h = cohort_size(make_accuracy_target(alpha, beta), 1000)
        # references are quoted to two decimals, some rounded and some truncated
        assert abs(h - expected) < 0.01

    @settings(max_examples=300, deadline=None)
    @given(alphas, betas, st.integers(min_value=1, max_value=10**7))
    def test_production_identity(self, alpha, beta, n):
        t = make_accuracy_target(alpha, beta)
        eps, h = epsilon_for(t, n), cohort_size(t, n)
        assert eps * (n - h) == pytest.approx(1.0, rel=1e-10)
        assert eps == pytest.approx(independent_m(beta) / (alpha * n), rel=1e-12)

    @given(alphas, betas, st.integers(min_value=1, max_value=10**6))
    def test_required_cohort_is_ceiling(self, alpha, beta, n):
        t = make_accuracy_target(alpha, beta)
        k = required_cohort(t, n)
        assert k - 1 < cohort_size(t, n) <= k

    def test_bias_correction(self):
        t = make_accuracy_target(0.2, 0.1)
        assert bias_correction(t, 1000) == pytest.approx(0.2 * 1000 / (2 * t.m), rel=1e-15)

    def test_epsilon_scales_inversely_with_population(self):
        t = make_accuracy_target(0.3, 0.2)
        assert dp_certificate(t, 1000) == pytest.approx(10 * dp_certificate(t, 10000), rel=1e-15)


class TestDatabase:
    def test_true_statistic(self):
        assert true_statistic(BitDatabase(np.zeros(10))) == 0.0
        assert true_statistic(BitDatabase(np.ones(10))) == 1.0
        assert true_statistic(BitDatabase([1, 0, 1, 1])) == 0.75

    def test_rejects_non_bits(self):
        with pytest.raises(DomainError):
            BitDatabase([0, 2, 1])

    def test_bits_are_read_only(self):
        db = BitDatabase([0, 1])
        with pytest.raises(ValueError):
            db.bits[0] = 1

    def test_neighbors(self):
        assert are_neighbors((2, 3), (1, 4))
        assert not are_neighbors((2, 3), (2, 3))
        assert not are_neighbors((2, 3), (2, 4))
        with pytest.raises(ShapeError):
            are_neighbors((1, 2), (1, 2, 0))


class TestLaplace:
    @pytest.mark.parametrize("scale, u, expected", [
        (1.0, 0.0, 0.0),
        (1.0, 0.25, 0.6931471805599453),
        (2.0, -0.25, -1.3862943611198906),
    ])
    def test_inverse_cdf(self, scale, u, expected):
        assert laplace_from_uniform(scale, u) == pytest.approx(expected, abs=1e-15)

    @given(st.floats(min_value=-0.4999, max_value=0.4999), st.floats(min_value=0.01, max_value=100))
    def test_inverse_cdf_inverts_the_cdf(self, u, scale):
        x = laplace_from_uniform(scale, u)
        cdf = 0.5 * math.exp(x / scale) if x < 0 else 1 - 0.5 * math.exp(-x / scale)
        assert cdf - 0.5 == pytest.approx(u, abs=1e-12)

    def test_moments(self):
        rng = make_rng(2024)
        x = laplace_from_uniform(3.0, centered_uniforms(rng, 10**6))
        assert abs(x.mean()) < 0.01 * 3.0
        assert np.abs(x).mean() == pytest.approx(3.0, rel=0.01)

    def test_rejects_bad_scale(self):
        with pytest.raises(DomainError):
            laplace_sample(0.0, make_rng(0))


class TestPublish:
    def test_zero_noise_all_zeros(self):
        t = make_accuracy_target(0.2, 0.1)
        db = BitDatabase(np.zeros(1000))
        stat = gr_publish(db, range(required_cohort(t, 1000)), t, 0, noise_draw=0.0)
        assert stat.value == pytest.approx(0.2 / (2 * t.m), rel=1e-14)
        assert stat.value == pytest.approx(0.035681, abs=5e-7)

    def test_zero_noise_all_ones(self):
        t = make_accuracy_target(0.2, 0.1)
        db = BitDatabase(np.ones(1000))
        assert required_cohort(t, 1000) == 929
        stat = gr_publish(db, range(929), t, 0, noise_draw=0.0)
        assert stat.value == pytest.approx((929 + 1000 * 0.2 / (2 * t.m)) / 1000, rel=1e-14)
        assert stat.value == pytest.approx(0.964681, abs=5e-7)

    def test_seeded_runs_are_identical(self):
        t = make_accuracy_target(0.4, 1 / 3)
        db = BitDatabase(make_rng(5).integers(0, 2, 500))
        cohort = range(required_cohort(t, 500))
        a = gr_publish(db, cohort, t, 99)
        b = gr_publish(db, cohort, t, 99)
        assert a == b and a.seed == 99

    def test_noise_scale(self):
        t = make_accuracy_target(0.4, 1 / 3)
        db = BitDatabase(np.zeros(500))
        stat = gr_publish(db, range(required_cohort(t, 500)), t, 3)
        expected = laplace_sample(1.0 / epsilon_for(t, 500), make_rng(3))
        assert stat.noise_draw == expected

    def test_cohort_validation(self):
        t = make_accuracy_target(0.2, 0.1)
        db = BitDatabase(np.zeros(100))
        k = required_cohort(t, 100)
        with pytest.raises(CohortSizeError):
            gr_publish(db, range(k - 1), t, 0)
        with pytest.raises(IndexError):
            gr_publish(db, list(range(k - 1)) + [0], t, 0)
        with pytest.raises(IndexError):
            gr_publish(db, list(range(k - 1)) + [100], t, 0)


class TestPrivacy:
    @pytest.mark.parametrize("alpha, beta, expected", [(0.2, 0.1, 0.0140129), (0.4, 1 / 3, 0.0039965)])
    def test_certificate_equals_epsilon(self, alpha, beta, expected):
        t = make_accuracy_target(alpha, beta)
        assert dp_certificate(t, 1000) == epsilon_for(t, 1000)
        assert dp_certificate(t, 1000) == pytest.approx(expected, abs=5e-8)

    @given(alphas, betas, st.floats(min_value=-1e4, max_value=1e4))
    def test_log_ratio_bounded_by_certificate(self, alpha, beta, x):
        t = make_accuracy_target(alpha, beta)
        eps = dp_certificate(t, 1000)
        # neighbouring databases move the unnormalized sum by one
        r = log_density_ratio(x, 10.0, 11.0, 1.0 / eps)
        assert abs(r) <= eps * (1 + 1e-12)

    def test_log_ratio_bound_is_attained(self):
        t = make_accuracy_target(0.2, 0.1)
        eps = dp_certificate(t, 1000)
        assert log_density_ratio(-50.0, 10.0, 11.0, 1.0 / eps) == pytest.approx(eps, rel=1e-12)


class TestEmpiricalAccuracy:
    def test_worst_case_within_beta(self):
        t = make_accuracy_target(0.2, 0.1)
        cohort = np.arange(required_cohort(t, 1000))
        db = adversarial_database(1000, cohort, 1)
        rate = empirical_accuracy(db, t, cohort, 100_000, make_rng(11))
        assert rate <= 0.1 + 0.005
        # analytic worst case for this construction is beta (1 + 1/e) / 2
        assert rate == pytest.approx(0.1 * (1 + math.exp(-1)) / 2, abs=0.005)

    def test_random_database_within_beta(self):
        t = make_accuracy_target(0.2, 0.1)
        rng = make_rng(12)
        db = BitDatabase(rng.integers(0, 2, 1000))
        cohort = np.arange(required_cohort(t, 1000))
        assert empirical_accuracy(db, t, cohort, 100_000, rng) <= 0.1

    def test_jobs_deterministic(self):
        t = make_accuracy_target(0.4, 1 / 3)
        cohort = np.arange(required_cohort(t, 1000))
        db = adversarial_database(1000, cohort, 0)
        a = empirical_accuracy(db, t, cohort, 20_000, make_rng(1), jobs=4)
        b = empirical_accuracy(db, t, cohort, 20_000, make_rng(1), jobs=4)
        assert a == b

    def test_suppressed_noise_never_fails(self):
        t = make_accuracy_target(0.2, 0.1)
        cohort = np.arange(required_cohort(t, 1000))
        for bit in (0, 1):
            db = adversarial_database(1000, cohort, bit)
            assert empirical_accuracy(db, t, cohort, 10, make_rng(0), suppress_noise=True) == 0.0
