import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lnnforecast.baseline import BaselineConfig, rolling_forecast
from lnnforecast.dataset import DATE, RETURN
from lnnforecast.errors import InsufficientHistory
from lnnforecast.metrics import r_squared


def _frame(returns, **cols):
    idx = pd.bdate_range("2019-01-01", periods=len(returns), name=DATE)
    return pd.DataFrame({RETURN: returns, **cols}, index=idx)


def planted_linear(n, n_exo=3, seed=0):
    """R_t = alpha + beta R_{t-1} + gamma . Z_{t-1}, exactly."""
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, n_exo))
    alpha, beta, gamma = 0.3, -0.4, rng.standard_normal(n_exo)
    R = np.zeros(n)
    R[0] = rng.standard_normal()
    for t in range(1, n):
        R[t] = alpha + beta * R[t - 1] + gamma @ Z[t - 1]
    return _frame(R, **{f"z{j}": Z[:, j] for j in range(n_exo)})


def test_doubling_law_recovered():
    R = 1e-3 * 2.0 ** np.arange(45)
    out = rolling_forecast(_frame(R), BaselineConfig(window=30, columns=(RETURN,)))
    np.testing.assert_allclose(out["predicted"], out["actual"], rtol=1e-8)
    assert r_squared(out["actual"], out["predicted"]) == pytest.approx(1.0, abs=1e-12)


def test_planted_multivariate_law():
    out = rolling_forecast(planted_linear(200))
    assert len(out) == 170
    assert np.max(np.abs(out["predicted"] - out["actual"])) < 1e-6


def test_constant_return_absorbed_by_intercept():
    out = rolling_forecast(_frame(np.full(50, 0.7)), BaselineConfig(columns=(RETURN,)))
    np.testing.assert_allclose(out["predicted"], 0.7, rtol=1e-9)


@pytest.mark.parametrize("n,W", [(31, 30), (100, 30), (40, 10)])
def test_output_count(n, W):
    rng = np.random.default_rng(n)
    out = rolling_forecast(_frame(rng.standard_normal(n), a=rng.standard_normal(n)), BaselineConfig(window=W))
    assert len(out) == n - W
    assert out["t"].tolist() == list(range(W, n))


def test_insufficient_history():
    with pytest.raises(InsufficientHistory):
        rolling_forecast(_frame(np.zeros(30)))


def test_rank_deficient_geometry_still_forecasts():
    # more regressors than window rows: the ridge floor keeps every fit solvable
    rng = np.random.default_rng(3)
    f = _frame(rng.standard_normal(80), **{f"x{j}": rng.standard_normal(80) for j in range(31)})
    out = rolling_forecast(f)
    assert len(out) == 50 and np.all(np.isfinite(out["predicted"]))


def test_missing_value_skips_touching_windows():
    rng = np.random.default_rng(4)
    f = _frame(rng.standard_normal(70), a=rng.standard_normal(70))
    f.iloc[40, 1] = np.nan
    out = rolling_forecast(f)
    # every window t - 30 .. t - 1 with t in 41..70 contains row 40
    assert out["t"].tolist() == list(range(30, 41))


@settings(max_examples=25)
@given(st.integers(30, 59), st.floats(-5, 5).filter(lambda v: v != 0))
def test_forecast_ignores_current_and_future_rows(t, bump):
    f = planted_linear(60, seed=1)
    f[RETURN] += np.random.default_rng(2).standard_normal(60) * 0.1
    base = rolling_forecast(f).set_index("t")["predicted"]
    g = f.copy()
    g.iloc[t:, :] += bump
    moved = rolling_forecast(g).set_index("t")["predicted"]
    for s in range(30, t + 1):
        assert moved[s] == base[s]
