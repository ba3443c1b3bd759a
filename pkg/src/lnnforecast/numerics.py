"""Small dense-algebra helpers shared by the rest of the package."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lnnforecast.errors import DegenerateSeries, SingularSystem

RIDGE_FLOOR = 1e-10
STD_FLOOR = 1e-8


def solve_least_squares(X, y) -> np.ndarray:
    """Least-squares coefficients for ``X @ beta ~ y`` via ridge-floored normal equations.

    The ridge term is ``RIDGE_FLOOR`` times the mean diagonal of ``X.T @ X``
    (at least ``RIDGE_FLOOR``), so rank-deficient windows still return a
    minimum-norm-like solution instead of failing.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"incompatible shapes {X.shape} and {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise SingularSystem("non-finite entries in least-squares system")
    gram = X.T @ X
    scale = max(1.0, float(np.trace(gram)) / gram.shape[0])
    gram[np.diag_indices_from(gram)] += RIDGE_FLOOR * scale
    rhs = X.T @ y
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    z = np.linalg.solve(chol, rhs)
    return np.linalg.solve(chol.T, z)


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    def transform(self, X) -> np.ndarray:
        return apply_standardizer(self, X)

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.stds + self.means


def fit_standardizer(X) -> Standardizer:
    # population std (ddof=0), the StandardScaler convention
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("cannot fit a standardizer on zero rows")
    means = X.mean(axis=0)
    # np.mean of identical values can be off by an ulp, which the floor would amplify
    constant = np.ptp(X, axis=0) == 0
    means[constant] = X[0, constant]
    stds = X.std(axis=0)
    stds = np.where(stds > STD_FLOOR, stds, STD_FLOOR)
    return Standardizer(means=means, stds=stds)


def apply_standardizer(s: Standardizer, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != s.means.shape[0]:
        raise ValueError(f"standardizer fitted on {s.means.shape[0]} columns, got {X.shape[-1]}")
    return (X - s.means) / s.stds


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``1..max_lag`` (biased autocovariance estimator)."""
    x = np.asarray(series, dtype=np.float64)
    n = x.shape[0]
    if n <= max_lag:
        raise ValueError(f"series length {n} must exceed max_lag {max_lag}")
    x = x - x.mean()
    c0 = float(x @ x) / n
    if not c0 > 0.0:
        raise DegenerateSeries("series has zero variance")
    out = np.empty(max_lag)
    for lag in range(1, max_lag + 1):
        out[lag - 1] = float(x[:-lag] @ x[lag:]) / n / c0
    return out


def rank_transform(v) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("rank_transform needs a nonempty vector")
    order = np.argsort(v, kind="mergesort")
    sorted_v = v[order]
    ranks = np.empty(v.shape[0])
    i = 0
    n = v.shape[0]
    while i < n:
        j = i
        while j + 1 < n and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks
