import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lnnforecast.errors import DegenerateSeries, SingularSystem
from lnnforecast.numerics import (
    STD_FLOOR,
    acf,
    apply_standardizer,
    fit_standardizer,
    rank_transform,
    solve_least_squares,
)


def test_two_point_line():
    beta = solve_least_squares([[1, 0], [1, 1]], [1, 3])
    np.testing.assert_allclose(beta, [1, 2], atol=1e-9)


def test_zero_target_gives_zero_coefficients():
    X = np.hstack([np.ones((4, 1)), np.eye(4)[:, :3]])
    np.testing.assert_array_equal(solve_least_squares(X, np.zeros(4)), np.zeros(4))


def test_planted_coefficients_recovered(rng):
    X = rng.standard_normal((40, 5))
    X[:, 0] = 1.0
    beta_true = rng.standard_normal(5)
    beta = solve_least_squares(X, X @ beta_true)
    np.testing.assert_allclose(beta, beta_true, atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_residual_orthogonal_to_columns(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 6))
    y = rng.standard_normal(30)
    beta = solve_least_squares(X, y)
    assert np.max(np.abs(X.T @ (y - X @ beta))) < 1e-8 * np.linalg.norm(y)


def test_rank_deficient_window_still_solves():
    # 29 rows, 32 unknowns: the baseline's worst-case geometry
    rng = np.random.default_rng(1)
    X = np.hstack([np.ones((29, 1)), rng.standard_normal((29, 31))])
    y = rng.standard_normal(29)
    beta = solve_least_squares(X, y)
    assert np.all(np.isfinite(beta))
    np.testing.assert_allclose(X @ beta, y, atol=1e-4)


def test_non_finite_system_raises():
    with pytest.raises(SingularSystem):
        solve_least_squares([[1.0, np.nan], [1.0, 2.0]], [1.0, 2.0])


def test_constant_column_maps_to_zero():
    s = fit_standardizer([[2.0], [2.0], [2.0]])
    assert s.means[0] == 2.0
    assert s.stds[0] == STD_FLOOR
    np.testing.assert_array_equal(apply_standardizer(s, [[2.0], [2.0], [2.0]]), np.zeros((3, 1)))


def test_two_values_symmetric():
    z = apply_standardizer(fit_standardizer([[0.0], [2.0]]), [[0.0], [2.0]])
    assert z[0, 0] == -z[1, 0]
    assert z[1, 0] > 0


def test_fit_rows_only(rng):
    X = rng.standard_normal((100, 3))
    s = fit_standardizer(X[:80])
    means_before = s.means.copy()
    stds_before = s.stds.copy()
    apply_standardizer(s, X[80:])
    np.testing.assert_array_equal(s.means, means_before)
    np.testing.assert_array_equal(s.stds, stds_before)
    np.testing.assert_allclose(s.means, X[:80].mean(axis=0), rtol=0, atol=0)


@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_standardize_then_invert(X):
    s = fit_standardizer(X)
    Z = apply_standardizer(s, X)
    np.testing.assert_allclose(s.inverse(Z), X, rtol=0, atol=1e-10 * max(1.0, np.abs(X).max()))
    active = X.std(axis=0) > 1e-3
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(Z[:, active].std(axis=0), 1.0, atol=1e-8)


def test_acf_alternating_series():
    x = np.array([1.0, -1.0] * 50)
    assert acf(x, 1)[0] == pytest.approx(-1.0, abs=0.02)


def test_acf_white_noise_mostly_small():
    x = np.random.default_rng(3).standard_normal(1000)
    rho = acf(x, 20)
    assert np.mean(np.abs(rho) < 3 / np.sqrt(1000)) >= 0.9


def test_acf_matches_brute_force(rng):
    x = rng.standard_normal(50)
    m = x.mean()
    den = np.sum((x - m) ** 2)
    brute = [sum((x[t] - m) * (x[t + k] - m) for t in range(50 - k)) / den for k in range(1, 6)]
    np.testing.assert_allclose(acf(x, 5), brute, atol=1e-12)


def test_acf_constant_raises():
    with pytest.raises(DegenerateSeries):
        acf(np.ones(10), 2)


@pytest.mark.parametrize(
    "values, expected",
    [([10, 20, 30], [1, 2, 3]), ([5, 5], [1.5, 1.5]), ([3, 1, 3], [2.5, 1, 2.5])],
)
def test_rank_examples(values, expected):
    np.testing.assert_array_equal(rank_transform(values), expected)


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=40))
def test_rank_sum_invariant(values):
    n = len(values)
    r = rank_transform(values)
    assert r.sum() == pytest.approx(n * (n + 1) / 2)
