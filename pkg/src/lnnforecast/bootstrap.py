"""Moving block bootstrap over fixed forecast/truth pairs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lnnforecast.errors import DegenerateSeries, EmptyPairs, TooFewResiduals
from lnnforecast.metrics import METRIC_LABELS, METRIC_NAMES, compute_metrics
from lnnforecast.numerics import acf

MIN_BLOCK = 5


def last_significant_lag(residuals) -> int:
    """Largest lag up to floor(N/10) whose |ACF| exceeds 1/sqrt(N); 0 if none does."""
    e = np.asarray(residuals, dtype=np.float64)
    n = e.shape[0]
    max_lag = n // 10
    try:
        rho = acf(e, max_lag)
    except DegenerateSeries:
        return 0
    hits = np.flatnonzero(np.abs(rho) > 1.0 / math.sqrt(n))
    return int(hits[-1] + 1) if hits.size else 0


def block_length(residuals) -> int:
    e = np.asarray(residuals, dtype=np.float64)
    n = e.shape[0]
    if n < 10:
        raise TooFewResiduals(f"block length needs at least 10 residuals, got {n}")
    return max(MIN_BLOCK, min(last_significant_lag(e) + 2, n // 10))


def mbb_indices(n: int, block: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= block <= n:
        raise ValueError(f"block length {block} must lie in [1, {n}]")
    starts = rng.integers(0, n, size=-(-n // block))
    idx = (starts[:, None] + np.arange(block)[None, :]) % n
    return idx.ravel()[:n]


def mbb_resample(pairs, block: int, seed) -> list:
    """Resample a sequence of pairs by concatenating wrapped blocks; length is preserved."""
    pairs = list(pairs)
    idx = mbb_indices(len(pairs), block, np.random.default_rng(seed))
    return [pairs[i] for i in idx]


@dataclass
class MetricSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n_valid: int
    n_undefined: int


@dataclass
class BootstrapReport:
    metrics: dict[str, MetricSummary]
    B: int
    block_length: int
    replicates: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def rows(self):
        for name in METRIC_NAMES:
            s = self.metrics[name]
            yield name, s

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "mean", "std", "ci_low", "ci_high", "n_valid", "n_undefined", "B", "block_length"])
            for name, s in self.rows():
                w.writerow([name, repr(s.mean), repr(s.std), repr(s.ci_low), repr(s.ci_high), s.n_valid, s.n_undefined, self.B, self.block_length])

    def format_table(self, label: str = "") -> str:
        head = f"{'Model':<12}" + "".join(f"{METRIC_LABELS[m]:>22}" for m in METRIC_NAMES)
        line1 = f"{label:<12}" + "".join(f"{_pm(self.metrics[m]):>22}" for m in METRIC_NAMES)
        line2 = f"{'':<12}" + "".join(f"{_ci(self.metrics[m]):>22}" for m in METRIC_NAMES)
        return "\n".join([head, line1, line2])


def _pm(s: MetricSummary) -> str:
    return f"{s.mean:.3f} +/- {s.std:.3f}"


def _ci(s: MetricSummary) -> str:
    return f"[{s.ci_low:.3f}, {s.ci_high:.3f}]"


def _summarize(values: np.ndarray) -> MetricSummary:
    ok = values[np.isfinite(values)]
    undefined = int(values.size - ok.size)
    if ok.size == 0:
        nan = float("nan")
        return MetricSummary(nan, nan, nan, nan, 0, undefined)
    lo, hi = np.percentile(ok, [2.5, 97.5])
    std = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
    return MetricSummary(float(ok.mean()), std, float(lo), float(hi), int(ok.size), undefined)


def bootstrap_metrics(y, y_hat, B: int = 300, seed: int = 0, block: int | None = None) -> BootstrapReport:
    """Recompute every metric on ``B`` block-resampled copies of the pairs.

    Replicate ``b`` draws from its own generator spawned from ``seed``, so
    the result does not depend on evaluation order.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.size == 0:
        raise EmptyPairs("no forecast/truth pairs")
    if y.shape != y_hat.shape:
        raise ValueError("y and y_hat must have equal length")
    n = y.shape[0]
    if block is None:
        block = block_length(y - y_hat)
    block = min(block, n)
    children = np.random.SeedSequence(seed).spawn(B)
    reps = {m: np.empty(B) for m in METRIC_NAMES}
    for b, child in enumerate(children):
        idx = mbb_indices(n, block, np.random.default_rng(child))
        rep = compute_metrics(y[idx], y_hat[idx])
        for m in METRIC_NAMES:
            reps[m][b] = getattr(rep, m)
    return BootstrapReport({m: _summarize(reps[m]) for m in METRIC_NAMES}, B, block, reps)
