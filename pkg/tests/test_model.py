import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clusterdiff import DataError, FeatureCovariance, make_contrast, perturb, perturbation_line, test_statistic
from clusterdiff.model import as_data, residual_component

from conftest import random_spd


def test_contrast_examples():
    c = make_contrast([0, 1], [2], 5)
    np.testing.assert_allclose(c.nu, [0.5, 0.5, -1, 0, 0])
    assert c.nu_sq_norm == pytest.approx(1.5)

    c = make_contrast([0], [1], 2)
    np.testing.assert_allclose(c.nu, [1, -1])
    assert c.nu_sq_norm == 2

    c = make_contrast(range(50), range(50, 100), 150)
    assert np.count_nonzero(c.nu == 0) == 50
    np.testing.assert_allclose(np.abs(c.nu[:100]), 1 / 50)
    assert c.nu_sq_norm == pytest.approx(0.04)


@pytest.mark.parametrize(
    "a, b, n",
    [([], [1], 3), ([0], [0, 1], 3), ([0], [3], 3), ([-1], [0], 3)],
)
def test_contrast_rejects_bad_groups(a, b, n):
    with pytest.raises(DataError):
        make_contrast(a, b, n)


def test_statistic_examples():
    x = np.array([[4.0, 0], [6, 0], [1, 0]])
    assert test_statistic(x, make_contrast([0, 1], [2], 3), 0) == pytest.approx(4.0)
    assert test_statistic(x, make_contrast([0, 1], [2], 3), 1) == 0.0


def test_statistic_against_double_loop(rng):
    x = rng.normal(size=(10, 3))
    a, b = [0, 3, 4, 9], [1, 2]
    c = make_contrast(a, b, 10)
    for j in range(3):
        sa = sum(x[i, j] for i in a) / len(a)
        sb = sum(x[i, j] for i in b) / len(b)
        assert test_statistic(x, c, j) == pytest.approx(sa - sb, abs=1e-12)


def test_as_data_validation():
    with pytest.raises(DataError):
        as_data(np.ones(3))
    with pytest.raises(DataError):
        as_data(np.ones((1, 3)))
    with pytest.raises(DataError):
        as_data([[1.0, np.nan], [0, 0]])


@pytest.mark.parametrize(
    "sigma",
    [
        [[1.0, 2.0], [0.0, 1.0]],  # asymmetric
        [[1.0, 2.0], [2.0, 1.0]],  # indefinite
        [[0.0, 0.0], [0.0, 1.0]],  # zero diagonal
        [[1.0, 0.0, 0.0]],
    ],
)
def test_covariance_validation(sigma):
    with pytest.raises(DataError):
        FeatureCovariance(np.array(sigma))


def _line(rng, n=8, q=4, j=1):
    x = rng.normal(size=(n, q))
    sigma = random_spd(rng, q)
    c = make_contrast([0, 2, 5], [1, 6], n)
    return x, perturbation_line(x, sigma, c, j)


def test_perturb_at_anchor_is_identity(rng):
    x, line = _line(rng)
    np.testing.assert_array_equal(perturb(line, line.anchor), x)


def test_perturb_moves_statistic_and_only_group_rows(rng):
    x, line = _line(rng)
    for phi in (-3.0, 0.0, 7.0):
        xp = perturb(line, phi)
        assert test_statistic(xp, line.contrast, line.feature) == pytest.approx(phi, abs=1e-12)
        others = [3, 4, 7]
        np.testing.assert_array_equal(xp[others], x[others])


def test_residual_component_invariance(rng):
    x, line = _line(rng)
    U = residual_component(x, line)
    assert test_statistic(U, line.contrast, line.feature) == pytest.approx(0.0, abs=1e-12)
    for phi in (-3.0, 0.0, 7.0):
        Up = residual_component(perturb(line, phi), line)
        assert np.max(np.abs(Up - U)) < 1e-10


def test_residual_component_zero_statistic():
    x = np.array([[1.0, 5], [1, 2], [3, 0], [3, 1]])
    c = make_contrast([0, 1], [2, 3], 4)
    x[:, 0] = [2.0, 2.0, 2.0, 2.0]
    line = perturbation_line(x, FeatureCovariance(np.eye(2)), c, 0)
    np.testing.assert_array_equal(residual_component(x, line), x)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50))
def test_null_sd_and_statistic_property(seed, phi):
    rng = np.random.default_rng(seed)
    x, line = _line(rng)
    c = line.contrast
    assert line.null_sd == pytest.approx(np.sqrt(c.nu_sq_norm * line.variance_jj))
    xp = perturb(line, phi)
    assert test_statistic(xp, c, line.feature) == pytest.approx(phi, abs=1e-9)
