"""Point-forecast quality metrics and the forecast-bias t-test."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc

from lnnforecast.errors import UndefinedCorrelation, ZeroVarianceErrors
from lnnforecast.numerics import rank_transform

METRIC_NAMES = ("pearson_r", "spearman_rho", "directional_accuracy", "r_squared", "rmse", "mae")
METRIC_LABELS = {
    "pearson_r": "Pearson r",
    "spearman_rho": "Spearman rho",
    "directional_accuracy": "DA (%)",
    "r_squared": "R^2",
    "rmse": "RMSE",
    "mae": "MAE",
}


@dataclass(frozen=True)
class MetricsReport:
    pearson_r: float
    spearman_rho: float
    directional_accuracy: float
    r_squared: float
    rmse: float
    mae: float
    n: int

    @property
    def correlation_defined(self) -> bool:
        return not (math.isnan(self.pearson_r) or math.isnan(self.spearman_rho))

    def as_row(self) -> list[float]:
        return [getattr(self, k) for k in METRIC_NAMES]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BiasReport:
    mean_error: float
    t_statistic: float
    p_value: float
    n: int


def _pair(y, y_hat, min_len: int = 1):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.shape[0]} vs {y_hat.shape[0]}")
    if y.shape[0] < min_len:
        raise ValueError(f"need at least {min_len} observations, got {y.shape[0]}")
    return y, y_hat


def pearson(a, b) -> float:
    a, b = _pair(a, b, 2)
    da = a - a.mean()
    db = b - b.mean()
    saa = float(da @ da)
    sbb = float(db @ db)
    if saa == 0.0 or sbb == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant series")
    r = float(da @ db) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


def spearman(a, b) -> float:
    a, b = _pair(a, b, 2)
    return pearson(rank_transform(a), rank_transform(b))


def directional_accuracy(y, y_hat) -> float:
    # a zero only matches a zero
    y, y_hat = _pair(y, y_hat)
    return 100.0 * float(np.mean(np.sign(y) == np.sign(y_hat)))


def r_squared(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    sse = float(np.sum((y - y_hat) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return float("nan")
    return 1.0 - sse / sst


def compute_metrics(y, y_hat) -> MetricsReport:
    """All six metrics; correlations come back NaN when either series is constant."""
    y, y_hat = _pair(y, y_hat, 2)
    try:
        r = pearson(y, y_hat)
        rho = spearman(y, y_hat)
    except UndefinedCorrelation:
        r = rho = float("nan")
    err = y - y_hat
    return MetricsReport(
        pearson_r=r,
        spearman_rho=rho,
        directional_accuracy=directional_accuracy(y, y_hat),
        r_squared=r_squared(y, y_hat),
        rmse=math.sqrt(float(np.mean(err * err))),
        mae=float(np.mean(np.abs(err))),
        n=int(y.shape[0]),
    )


def student_t_two_sided_p(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return float(min(1.0, max(0.0, betainc(0.5 * df, 0.5, x))))


def bias_test(y, y_hat) -> BiasReport:
    y, y_hat = _pair(y, y_hat, 2)
    e = y - y_hat
    n = e.shape[0]
    mean = float(e.mean())
    sd = float(e.std(ddof=1))
    if sd == 0.0:
        raise ZeroVarianceErrors("forecast errors have zero variance")
    t = mean / (sd / math.sqrt(n))
    return BiasReport(mean_error=mean, t_statistic=t, p_value=student_t_two_sided_p(t, n - 1), n=n)
