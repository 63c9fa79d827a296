import math

import numpy as np
import pytest

from clusterdiff import ClusteringMethod, FeatureCovariance, IntervalUnion, NumericalError, fit_clustering, naive_p
from clusterdiff.model import make_contrast, perturbation_line
from clusterdiff.oracle import (
    GridScan,
    default_grid,
    grid_membership,
    mc_selective_p,
    quadrature_trunc_cdf,
    random_instance,
)

INF = math.inf


def test_quadrature_examples():
    assert quadrature_trunc_cdf(0.0, 0, 1, IntervalUnion.real_line()) == pytest.approx(0.5, abs=1e-14)
    assert quadrature_trunc_cdf(1.0, 0, 1, IntervalUnion([[-1, 1]])) == pytest.approx(1.0, abs=1e-14)
    # closed form for a single interval: (Phi(t) - Phi(lo)) / (Phi(hi) - Phi(lo))
    from scipy.stats import norm

    ref = (norm.cdf(0.2) - norm.cdf(-0.5)) / (norm.cdf(1.5) - norm.cdf(-0.5))
    assert quadrature_trunc_cdf(0.2, 0, 1, IntervalUnion([[-0.5, 1.5]])) == pytest.approx(ref, rel=1e-13)


def test_quadrature_budget_error():
    from clusterdiff.oracle import _integrate
    import mpmath

    with pytest.raises(NumericalError):
        _integrate(lambda z: abs(mpmath.sin(1 / (z + mpmath.mpf("1e-30")))), mpmath.mpf(-1), mpmath.mpf(1), 1e-30, max_intervals=20)


def test_grid_default_centres_on_anchor(rng):
    x = rng.normal(size=(6, 2))
    line = perturbation_line(x, FeatureCovariance(np.eye(2)), make_contrast([0, 1], [2], 6), 0)
    g = default_grid(line)
    assert g.size == 4001
    assert g[2000] == line.anchor
    assert g[-1] - g[0] == pytest.approx(12 * line.null_sd)
    with pytest.raises(ValueError):
        GridScan(np.array([0.0, 0.0]), np.array([True, True]))


@pytest.mark.parametrize("name", ["single", "average", "centroid", "ward", "kmeans"])
def test_anchor_is_always_a_member(name):
    rng = np.random.default_rng(9)
    for _ in range(3):
        x, sigma, fit, pair, j = random_instance(rng, name)
        c = make_contrast(fit.labels.members(pair[0]), fit.labels.members(pair[1]), x.shape[0])
        line = perturbation_line(x, sigma, c, j)
        scan = grid_membership(line, fit, default_grid(line, 101))
        assert scan.membership[50]


def test_grid_all_members_when_unconstrained(rng):
    x = rng.normal(size=(5, 2))
    fit = fit_clustering(x, ClusteringMethod("average", 5))
    c = make_contrast(fit.labels.members(0), fit.labels.members(1), 5)
    line = perturbation_line(x, FeatureCovariance(np.eye(2)), c, 0)
    assert grid_membership(line, fit, default_grid(line, 201)).membership.all()


def test_mc_real_line_matches_naive():
    est, se = mc_selective_p(1.1, 1.0, IntervalUnion.real_line(), 10**5, seed=1)
    assert abs(est - naive_p(1.1, 1.0)) <= 4 * se


def test_mc_at_infimum_is_one():
    est, se = mc_selective_p(2.0, 1.0, IntervalUnion([[-INF, -2.0], [2.0, INF]]), 10**4, seed=2)
    assert est == 1.0


def test_mc_importance_branch_far_tail():
    from clusterdiff import selective_p

    s = IntervalUnion([[-INF, -7.0], [6.5, 9.0]])
    est, se = mc_selective_p(6.8, 1.0, s, 10**5, seed=3)
    assert se > 0
    assert abs(est - selective_p(6.8, 1.0, s)) <= 4 * se


def test_mc_is_reproducible():
    s = IntervalUnion([[-INF, -1.0], [0.5, INF]])
    assert mc_selective_p(0.7, 1.0, s, 10**4, seed=5) == mc_selective_p(0.7, 1.0, s, 10**4, seed=5)
    with pytest.raises(ValueError):
        mc_selective_p(0.7, 1.0, s, 100, seed=5)


def test_report_csv(tmp_path, rng):
    from clusterdiff.oracle import check_instance

    x, sigma, fit, pair, j = random_instance(rng, "average")
    rep = check_instance(x, sigma, fit, pair, j, n_grid=51)
    path = tmp_path / "scan.csv"
    rep.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "phi,member_analytic,member_grid"
    assert len(lines) == 52
