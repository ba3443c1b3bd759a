"""Synthetic frames with a planted, known signal, for tests and desk-scale runs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from lnnforecast.dataset import PRICE, compute_returns, drop_leading_undefined

SIGNAL = "signal"


def planted_frame(
    n_rows: int = 600,
    n_noise_features: int = 4,
    seed: int = 0,
    amplitude: float = 2.0,
    noise: float | None = None,
    target_r: float = 0.5,
    sharpness: float = 1.5,
) -> pd.DataFrame:
    """Frame whose return obeys ``R_t = amplitude * tanh(sharpness * signal_{t-1}) + noise``.

    When ``noise`` is None it is set so that the oracle correlation between
    the return and the true signal term equals ``target_r`` in population.
    Dates are business days, so the gap column holds 1s and weekend 3s.
    """
    rng = np.random.default_rng(seed)
    total = n_rows + 2
    if noise is None:
        mc = np.tanh(sharpness * np.random.default_rng(12345).standard_normal(400_000))
        signal_var = amplitude**2 * mc.var()
        noise = float(np.sqrt(signal_var * (1.0 - target_r**2) / target_r**2))
    x = rng.standard_normal(total)
    ret = np.zeros(total)
    ret[1:] = amplitude * np.tanh(sharpness * x[:-1]) + noise * rng.standard_normal(total - 1)
    price = 3.0 * np.cumprod(1.0 + ret / 100.0)
    dates = pd.bdate_range("2015-01-06", periods=total, name="Date")
    frame = pd.DataFrame({PRICE: price, SIGNAL: x}, index=dates)
    for j in range(n_noise_features):
        frame[f"noise_{j}"] = rng.standard_normal(total)
    frame = compute_returns(frame)
    frame, _ = drop_leading_undefined(frame)
    return frame


def oracle_signal(frame: pd.DataFrame, amplitude: float = 2.0, sharpness: float = 1.5) -> np.ndarray:
    """The noiseless component of each row's return (NaN on the first row)."""
    x = frame[SIGNAL].to_numpy()
    out = np.full(len(x), np.nan)
    out[1:] = amplitude * np.tanh(sharpness * x[:-1])
    return out


def write_sources(directory, frame: pd.DataFrame | None = None, **planted_kwargs) -> Path:
    """Split a planted frame into two source CSVs plus a schema; returns the schema path.

    The price file uses US-style dates and the feature file ISO dates, so ingestion exercises both parsers.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if frame is None:
        frame = planted_frame(**planted_kwargs)
    dates = frame.index
    features = [c for c in frame.columns if c == SIGNAL or c.startswith("noise_")]
    pd.DataFrame({"Day": dates.strftime("%m/%d/%Y"), "Price": frame[PRICE].to_numpy()}).to_csv(
        directory / "spot.csv", index=False, float_format="%.17g"
    )
    feat = pd.DataFrame({"Date": dates.strftime("%Y-%m-%d")})
    for c in features:
        feat[c] = frame[c].to_numpy()
    feat.to_csv(directory / "features.csv", index=False, float_format="%.17g")
    schema = {
        "sources": [
            {"path": "spot.csv", "date_column": "Day", "date_format": "%m/%d/%Y", "columns": [{"source": "Price", "role": "target_price"}]},
            {"path": "features.csv", "columns": [{"source": c} for c in features]},
        ]
    }
    path = directory / "schema.json"
    path.write_text(json.dumps(schema, indent=2) + "\n")
    return path
