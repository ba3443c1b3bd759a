"""Rolling-window multivariate linear regression baseline.

For a forecast at row ``t`` the model is fitted on the ``W`` rows
``t-W .. t-1``: each row ``s`` in that span after the first contributes the
pair (regressors at ``s-1``, return at ``s``).  The forecast applies the
coefficients to the regressors at ``t-1``, so nothing at or after ``t`` is read.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from lnnforecast.dataset import RETURN, baseline_columns
from lnnforecast.errors import InsufficientHistory, MissingExpectedColumn
from lnnforecast.numerics import solve_least_squares

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BaselineConfig:
    window: int = 30
    columns: tuple[str, ...] | None = None  # None: lagged return + every exogenous column
    target: str = RETURN


def rolling_forecast(frame: pd.DataFrame, cfg: BaselineConfig = BaselineConfig()) -> pd.DataFrame:
    """One-step-ahead forecasts for every row ``t >= W``.

    Returns a frame with columns ``t`` (row position), ``date``, ``actual``
    and ``predicted``; windows touching a missing value are skipped.
    """
    W = cfg.window
    n = len(frame)
    if n < W + 1:
        raise InsufficientHistory(f"need at least {W + 1} rows, got {n}")
    cols = list(cfg.columns) if cfg.columns is not None else baseline_columns(frame)
    missing = [c for c in cols + [cfg.target] if c not in frame.columns]
    if missing:
        raise MissingExpectedColumn(f"baseline columns absent from frame: {missing}")
    Z = frame[cols].to_numpy(dtype=np.float64)
    y = frame[cfg.target].to_numpy(dtype=np.float64)
    design = np.hstack([np.ones((n, 1)), Z])
    row_ok = np.all(np.isfinite(design), axis=1)
    y_ok = np.isfinite(y)

    rows = []
    for t in range(W, n):
        lo = t - W
        if not (row_ok[lo:t].all() and y_ok[lo + 1 : t].all()):
            log.info("baseline: skipping window ending at row %d (missing values)", t)
            continue
        beta = solve_least_squares(design[lo : t - 1], y[lo + 1 : t])
        rows.append((t, frame.index[t], y[t], float(design[t - 1] @ beta)))
    return pd.DataFrame(rows, columns=["t", "date", "actual", "predicted"])
