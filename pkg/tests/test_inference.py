import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import kstest, norm

from clusterdiff import (
    ClusteringMethod,
    DataError,
    DegenerateSupportError,
    FeatureCovariance,
    IntervalUnion,
    TruncatedGaussian,
    bh_adjust,
    estimate_covariance,
    fit_clustering,
    naive_p,
    run_test,
    selective_p,
    trunc_cdf,
)
from clusterdiff.clustering import ClusterLabels
from clusterdiff.inference import log_interval_mass
from clusterdiff.oracle import mc_selective_p, quadrature_trunc_cdf

from conftest import blobs, random_spd

INF = math.inf
R = IntervalUnion.real_line()


def test_cdf_symmetry_and_half_line():
    assert trunc_cdf(0.0, TruncatedGaussian(0, 1, R)) == pytest.approx(0.5, abs=1e-15)
    g = TruncatedGaussian(0, 1, IntervalUnion([[0, INF]]))
    for t in (0.0, 0.3, 1.7, 5.0):
        assert trunc_cdf(t, g) == pytest.approx(2 * norm.cdf(t) - 1, rel=1e-12, abs=1e-15)


def test_cdf_far_tail_matches_quadrature():
    for s, ts in [
        (IntervalUnion([[8, 9]]), [8.2, 8.5, 8.9]),
        (IntervalUnion([[-40, -39]]), [-39.9, -39.5, -39.1]),
    ]:
        g = TruncatedGaussian(0, 1, s)
        for t in ts:
            ref = quadrature_trunc_cdf(t, 0, 1, s)
            assert trunc_cdf(t, g) == pytest.approx(ref, rel=1e-8)


def test_cdf_limits_and_monotone():
    s = IntervalUnion([[-INF, -3], [-1, 0.5], [2, 2.1], [6, INF]])
    g = TruncatedGaussian(0.3, 1.7, s)
    ts = np.linspace(-60, 60, 2001)
    vals = np.array([trunc_cdf(t, g) for t in ts])
    assert np.all(np.isfinite(vals))
    assert np.all(np.diff(vals) >= -1e-15)
    assert vals[0] == pytest.approx(0, abs=1e-12)
    assert vals[-1] == pytest.approx(1, abs=1e-12)


def test_log_interval_mass_stays_finite():
    assert log_interval_mass(40, 41)[0] == pytest.approx(-800 - math.log(40 * math.sqrt(2 * math.pi)), abs=1e-3)
    assert log_interval_mass(-41, -40)[0] == log_interval_mass(40, 41)[0]
    assert log_interval_mass(-INF, INF)[0] == 0.0
    assert log_interval_mass(1, 1)[0] == -INF


def test_degenerate_support_raises():
    with pytest.raises(DegenerateSupportError):
        TruncatedGaussian(0, 1, IntervalUnion.empty())
    with pytest.raises(DegenerateSupportError):
        TruncatedGaussian(0, 1, IntervalUnion([[1e200, INF]]))


def test_naive_examples():
    assert naive_p(0.0, 2.0) == 1.0
    assert naive_p(1.959964, 1.0) == pytest.approx(0.05, abs=1e-6)
    assert naive_p(-1.959964 * 3, 3.0) == pytest.approx(0.05, abs=1e-6)
    assert naive_p(60.0, 1.0) >= 1e-300


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 20))
def test_selective_equals_naive_on_real_line(stat, sd):
    assert selective_p(stat, sd, R) == pytest.approx(naive_p(stat, sd), rel=1e-12, abs=1e-300)


def test_selective_on_symmetric_boundary_is_one():
    s = IntervalUnion([[-INF, -1.3], [1.3, INF]])
    assert selective_p(1.3, 0.7, s) == pytest.approx(1.0, abs=1e-12)
    assert selective_p(-1.3, 0.7, s) == pytest.approx(1.0, abs=1e-12)


def test_selective_requires_statistic_in_support():
    with pytest.raises(DataError):
        selective_p(0.0, 1.0, IntervalUnion([[1, 2]]))


def test_selective_far_tail_is_finite():
    s = IntervalUnion([[30, 31], [-35, -34]])
    p = selective_p(30.5, 1.0, s)
    assert 0 < p <= 1
    # mass at -34.x is negligible next to 30.x, so this is P(Y >= 30.5 | Y in [30, 31])
    g = TruncatedGaussian(0, 1, IntervalUnion([[30, 31]]))
    assert p == pytest.approx(1 - trunc_cdf(30.5, g), rel=1e-9)


def test_selective_p_is_uniform_at_fixed_support():
    """The probability integral transform at a fixed truncation set."""
    rng = np.random.default_rng(0)
    s = IntervalUnion([[-INF, -1.0], [0.5, 2.0], [2.5, 3.0]])
    sd = 1.3
    y = rng.normal(scale=sd, size=200_000)
    y = y[[s.__contains__(v) for v in y]][:3000]
    p = np.array([selective_p(v, sd, s) for v in y])
    assert kstest(p, "uniform").pvalue > 0.01


def test_bh_examples():
    np.testing.assert_allclose(bh_adjust([0.01, 0.02, 0.03, 0.04]), [0.04] * 4)
    np.testing.assert_allclose(bh_adjust([0.3]), [0.3])
    np.testing.assert_allclose(bh_adjust([0.04, 0.01]), [0.04, 0.02])
    with pytest.raises(DataError):
        bh_adjust([0.5, 1.2])


def _step_up_reject(p, level):
    m = len(p)
    order = np.sort(p)
    ok = np.flatnonzero(order <= level * np.arange(1, m + 1) / m)
    if ok.size == 0:
        return np.zeros(m, dtype=bool)
    return p <= order[ok[-1]]


def test_bh_matches_step_up_rule():
    rng = np.random.default_rng(4)
    p = np.concatenate([rng.uniform(size=450), rng.uniform(0, 0.01, size=50)])
    rng.shuffle(p)
    adj = bh_adjust(p)
    for level in (0.05, 0.1, 0.2):
        np.testing.assert_array_equal(adj <= level, _step_up_reject(p, level))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_bh_properties(p):
    p = np.array(p)
    adj = bh_adjust(p)
    assert np.all(adj >= p - 1e-15)
    assert np.all(adj <= 1)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)


def test_covariance_single_cluster_is_sample_covariance(rng):
    x = rng.normal(size=(30, 4))
    s = estimate_covariance(x, ClusterLabels(np.zeros(30, dtype=int), 1))
    np.testing.assert_allclose(s.sigma, np.cov(x, rowvar=False), atol=1e-12)
    assert s.estimated


def test_covariance_zero_residuals_floored():
    x = np.array([[1.0, 2.0]] * 3 + [[4.0, -1.0]] * 3)
    s = estimate_covariance(x, ClusterLabels(np.repeat([0, 1], 3), 2))
    assert np.all(np.linalg.eigvalsh(s.sigma) > 0)
    np.testing.assert_allclose(s.sigma, 1e-8 * np.eye(2))


def test_covariance_matches_two_pass(rng):
    x = rng.normal(size=(25, 3))
    lab = rng.integers(0, 3, size=25)
    lab[:3] = [0, 1, 2]
    s = estimate_covariance(x, ClusterLabels(lab, 3))
    ref = np.zeros((3, 3))
    for i in range(25):
        members = [k for k in range(25) if lab[k] == lab[i]]
        mean = sum(x[k] for k in members) / len(members)
        r = x[i] - mean
        ref += np.outer(r, r)
    ref /= 25 - 3
    np.testing.assert_allclose(s.sigma, ref, atol=1e-10)
    np.testing.assert_array_equal(s.sigma, s.sigma.T)


def test_covariance_needs_degrees_of_freedom():
    x = np.eye(3)
    with pytest.raises(DataError):
        estimate_covariance(x, ClusterLabels(np.arange(3), 3))


def test_run_test_untruncated_reduces_to_naive(rng):
    x = rng.normal(size=(6, 2))
    r = run_test(x, FeatureCovariance(np.eye(2)), ClusteringMethod("average", 6), (0, 3), 1)
    assert r.truncation.is_real_line()
    assert r.p_selective == pytest.approx(r.p_naive, rel=1e-12)


def test_run_test_report_contents(rng):
    x = blobs(rng, [5, 5, 5], 3)
    sigma = random_spd(rng, 3)
    r = run_test(x, sigma, ClusteringMethod("ward", 3), (0, 2), 2)
    assert r.statistic in r.truncation
    assert r.sd == pytest.approx(math.sqrt((1 / len(r.group_a) + 1 / len(r.group_b)) * sigma.sigma[2, 2]))
    js = r.to_json()
    assert js["feature"] == 3 and js["pair"] == [1, 3]
    assert min(js["group_a"]) >= 1
    assert set(js) >= {"feature", "group_a", "group_b", "statistic", "sd", "truncation", "p_selective", "p_naive", "method"}


def test_run_test_rejects_bad_pair(rng):
    x = rng.normal(size=(10, 2))
    with pytest.raises(DataError):
        run_test(x, FeatureCovariance(np.eye(2)), ClusteringMethod("single", 3), (1, 1), 0)
    with pytest.raises(DataError):
        run_test(x, FeatureCovariance(np.eye(2)), ClusteringMethod("single", 3), (0, 3), 0)


@pytest.mark.slow
def test_run_test_average_linkage_matches_monte_carlo():
    rng = np.random.default_rng(6)
    x = blobs(rng, [4, 4, 4], 2, spread=2.0)
    r = run_test(x, FeatureCovariance(np.eye(2)), ClusteringMethod("average", 3), (0, 1), 0)
    est, se = mc_selective_p(r.statistic, r.sd, r.truncation, 10**6, seed=3)
    assert abs(est - r.p_selective) <= 4 * max(se, 1e-6)


def test_kmeans_fit_uses_method_seed(rng):
    x = rng.normal(size=(20, 2))
    f1 = fit_clustering(x, ClusteringMethod("kmeans", 3, seed=5))
    f2 = fit_clustering(x, ClusteringMethod("kmeans", 3, seed=5))
    np.testing.assert_array_equal(f1.record.assignments, f2.record.assignments)
