import math

import numpy as np
import pytest
from scipy import stats
from sklearn.base import clone

from pimasim.estimator import (ActiveCountEstimator, ActivityPrior, DecisionRegions,
                               DegeneratePriorError, PowerModel, approx_error_prob,
                               average_error_prob, conditional_error_prob, db_to_linear,
                               estimate_active, gaussian_boundary, map_boundaries,
                               practical_thresholds, q_function, q_inverse, required_samples,
                               sample_received_power)
from pimasim.validation import ConfigError

SIGMA2 = 0.1


def q_inverse_bisect(p, lo=-40.0, hi=40.0):
    """Independent Q^-1 via bisection on the normal survival function."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if stats.norm.sf(mid) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_noise_db():
    assert db_to_linear(-10) == pytest.approx(0.1)


@pytest.mark.parametrize("p", [1e-6, 0.05, 0.15, 0.5, 0.9])
def test_q_inverse_matches_bisection(p):
    assert float(q_inverse(p)) == pytest.approx(q_inverse_bisect(p), abs=1e-10)
    assert float(q_function(q_inverse(p))) == pytest.approx(p, rel=1e-10)


def test_required_samples_reference_operating_points():
    # hand values: Q^-1(0.05) = 1.6448536, Q^-1(0.15) = 1.0364334
    assert (2 * 20.1 * q_inverse_bisect(0.05)) ** 2 == pytest.approx(4372.26, abs=0.01)
    assert required_samples(20, SIGMA2, 0.1) == 4373
    assert required_samples(20, SIGMA2, 0.3) == 1736
    assert 4373 / 1e8 * 1e6 == pytest.approx(43.73)
    assert round(1736 / 1e8 * 1e6) == 17


def test_required_samples_monotone():
    targets = np.linspace(0.01, 0.99, 50)
    m = [required_samples(20, SIGMA2, p) for p in targets]
    assert all(a >= b for a, b in zip(m, m[1:]))
    assert [required_samples(k, SIGMA2, 0.1) for k in (5, 10, 20, 40)] == sorted(
        required_samples(k, SIGMA2, 0.1) for k in (5, 10, 20, 40))
    assert required_samples(20, SIGMA2, 0.9999) < 5


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
def test_required_samples_rejects_bad_target(p):
    with pytest.raises(ConfigError):
        required_samples(20, SIGMA2, p)


def test_power_model_duration():
    model = PowerModel.from_target(20, SIGMA2, 0.1)
    assert model.n_samples == 4373
    assert model.pia_duration * model.bandwidth == pytest.approx(model.n_samples)


@pytest.mark.parametrize("nu", [0, 1, 7, 20])
def test_erlang_power_mean_and_variance(nu):
    model = PowerModel(SIGMA2, 4400)
    draws = sample_received_power(nu, model, np.random.default_rng(nu), size=100_000)
    mean = nu + SIGMA2
    assert draws.mean() == pytest.approx(mean, rel=0.01)
    assert draws.var() == pytest.approx(mean ** 2 / 4400, rel=0.03)


def test_erlang_power_is_nearly_gaussian_for_large_m1():
    draws = sample_received_power(0, PowerModel(SIGMA2, 4400), np.random.default_rng(4), size=200_000)
    assert abs(stats.skew(draws)) < 0.05


def test_symbol_level_sampling_matches_erlang_law():
    model = PowerModel(SIGMA2, 200)
    draws = sample_received_power(3, model, np.random.default_rng(5), size=2000, symbol_level=True)
    law = stats.gamma(200, scale=3.1 / 200)
    assert stats.kstest(draws, law.cdf).pvalue > 0.01


def test_practical_thresholds_values():
    np.testing.assert_allclose(practical_thresholds(2, SIGMA2).boundaries, [0.6, 1.6])
    eps = practical_thresholds(20, SIGMA2).boundaries
    assert eps[19] == pytest.approx(19.6)
    np.testing.assert_allclose(np.diff(eps), 1.0)


def test_estimate_active_examples():
    regions = practical_thresholds(2, SIGMA2)
    assert estimate_active(0.2, regions) == 0
    assert estimate_active(1.3, regions) == 1
    assert estimate_active(7.0, regions) == 2
    # a value on a boundary belongs to the lower region
    assert estimate_active(regions.boundaries[0], regions) == 0


def test_practical_estimate_equals_clamped_rounding():
    K = 20
    regions = practical_thresholds(K, SIGMA2)
    grid = np.arange(0, 25, 1e-3) + 1e-4 * math.pi  # stays off the half-integers
    expected = np.clip(np.floor(grid - SIGMA2 + 0.5), 0, K).astype(int)
    np.testing.assert_array_equal(estimate_active(grid, regions), expected)


def test_regions_must_increase():
    with pytest.raises(ConfigError):
        DecisionRegions([0.5, 0.5, 1.0])


def weighted_density(x, mean, var, p):
    return p * stats.norm.pdf(x, mean, math.sqrt(var))


@pytest.mark.parametrize("prior", [ActivityPrior.uniform(20), ActivityPrior.binomial(20, 0.3)])
def test_map_boundary_balances_weighted_densities(prior):
    model = PowerModel(SIGMA2, 4373)
    regions = map_boundaries(prior, 20, SIGMA2, 4373)
    for b, eps in enumerate(regions.boundaries):
        p0, p1 = max(prior.probs[b], 1e-12), max(prior.probs[b + 1], 1e-12)
        left = weighted_density(eps, model.mean(b), model.std(b) ** 2, p0)
        right = weighted_density(eps, model.mean(b + 1), model.std(b + 1) ** 2, p1)
        assert abs(left - right) <= 1e-9 * max(left, right)


def test_map_boundaries_lie_between_means_for_uniform_prior():
    eps = map_boundaries(ActivityPrior.uniform(20), 20, SIGMA2, 4400).boundaries
    b = np.arange(20)
    assert np.all(eps > b + SIGMA2) and np.all(eps < b + 1 + SIGMA2)


def test_equal_variances_and_priors_give_midpoint():
    assert gaussian_boundary(1.0, 0.04, 0.5, 2.0, 0.04, 0.5) == pytest.approx(1.5)
    assert gaussian_boundary(1.0, 0.04, 0.5, 2.0, 0.04, 0.5, single_log=True) == pytest.approx(1.5)


def test_single_log_boundary_solves_its_own_equation():
    m0, v0, p0, m1, v1, p1 = 3.1, 0.01, 0.2, 4.1, 0.015, 0.3
    x = gaussian_boundary(m0, v0, p0, m1, v1, p1, single_log=True)
    left = p0 / math.sqrt(v0) * math.exp(-(x - m0) ** 2 / v0)
    right = p1 / math.sqrt(v1) * math.exp(-(x - m1) ** 2 / v1)
    assert left == pytest.approx(right, rel=1e-9)


def test_skewed_prior_reports_offending_count():
    probs = np.full(21, 1e-6)
    probs[3] = 1 - 20e-6
    with pytest.raises(DegeneratePriorError) as err:
        map_boundaries(ActivityPrior(probs), 20, SIGMA2, 50)
    assert err.value.b in (2, 3)


def test_skewed_binomial_prior_has_no_crossing_between_means():
    # the crossing for counts 18/19 is pushed beyond the mean of 19
    with pytest.raises(DegeneratePriorError) as err:
        map_boundaries(ActivityPrior.binomial(20, 0.3), 20, SIGMA2, 1736)
    assert err.value.b == 18


def test_zero_prior_entries_are_floored():
    regions = map_boundaries(ActivityPrior.point_mass(2, 1), 2, SIGMA2, 10 ** 6)
    assert regions.n_users == 2


def test_prior_validation():
    with pytest.raises(ConfigError):
        ActivityPrior([0.5, 0.6])
    with pytest.raises(ConfigError):
        ActivityPrior([-0.1, 1.1])


def test_conditional_error_with_practical_thresholds_matches_approximation():
    regions = practical_thresholds(20, SIGMA2)
    for b in range(1, 20):
        assert conditional_error_prob(b, regions, 1736, SIGMA2) == pytest.approx(
            approx_error_prob(b, 1736, SIGMA2), rel=1e-12)
    # edge counts keep a single tail
    assert conditional_error_prob(0, regions, 1736, SIGMA2) == pytest.approx(
        0.5 * approx_error_prob(0, 1736, SIGMA2), rel=1e-12)
    assert conditional_error_prob(20, regions, 1736, SIGMA2) == pytest.approx(0.15, rel=1e-3)


def test_conditional_error_rejects_bad_count():
    with pytest.raises(ConfigError):
        conditional_error_prob(21, practical_thresholds(20, SIGMA2), 1736, SIGMA2)


def test_conditional_error_against_monte_carlo():
    regions = practical_thresholds(20, SIGMA2)
    model = PowerModel(SIGMA2, 1736)
    draws = sample_received_power(20, model, np.random.default_rng(11), size=100_000)
    empirical = np.mean(estimate_active(draws, regions) != 20)
    assert empirical == pytest.approx(conditional_error_prob(20, regions, 1736, SIGMA2), rel=0.15)
    assert empirical == pytest.approx(conditional_error_prob(20, regions, 1736, SIGMA2, exact=True),
                                      rel=0.03)


def test_average_error_prob():
    regions = practical_thresholds(20, SIGMA2)
    pe = np.array([conditional_error_prob(b, regions, 1736, SIGMA2) for b in range(21)])
    assert average_error_prob(ActivityPrior.point_mass(20, 7), regions, 1736, SIGMA2) == pytest.approx(pe[7])
    assert average_error_prob(ActivityPrior.uniform(20), regions, 1736, SIGMA2) == pytest.approx(pe.mean())
    binom = ActivityPrior.binomial(20, 0.4)
    assert average_error_prob(binom, regions, 1736, SIGMA2) <= pe.max()


def test_sklearn_estimator_practical():
    est = ActiveCountEstimator(n_users=20, n_samples=4373)
    rng = np.random.default_rng(12)
    y = rng.integers(0, 21, size=5000)
    X = np.array([sample_received_power(int(n), PowerModel(SIGMA2, 4373), rng) for n in y])[:, None]
    est.fit(X, y)
    assert est.score(X, y) > 0.95
    assert clone(est).get_params() == est.get_params()
    profile = est.error_profile()
    assert profile.max() < 0.1 and np.all(np.diff(profile[:20]) > 0)
    # the end regions are open on one side
    assert profile[20] == pytest.approx(0.05, rel=0.02)


def test_sklearn_estimator_map_uses_label_frequencies():
    rng = np.random.default_rng(13)
    model = PowerModel(SIGMA2, 4373)
    y = rng.binomial(20, 0.2, size=4000)
    X = np.array([sample_received_power(int(n), model, rng) for n in y])[:, None]
    practical = ActiveCountEstimator(n_samples=4373).fit(X, y)
    map_est = ActiveCountEstimator(n_samples=4373, thresholds="map").fit(X, y)
    assert map_est.prior_.probs.sum() == pytest.approx(1.0)
    assert map_est.score(X, y) >= practical.score(X, y) - 0.01


def test_sklearn_estimator_rejects_unknown_mode():
    with pytest.raises(ValueError):
        ActiveCountEstimator(thresholds="nearest").fit(np.ones((3, 1)))
