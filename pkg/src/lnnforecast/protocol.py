"""Hyperparameter grid search and stratified expanding-window evaluation."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from lnnforecast.cells import WINDOW_LENGTH, ArchKind, forward_batch, init_params
from lnnforecast.dataset import ModelData, RowAudit, split_point
from lnnforecast.errors import LnnForecastError, NoValidConfig, SpanTooShort, UndefinedCorrelation
from lnnforecast.metrics import pearson
from lnnforecast.training import TrainConfig, predict, train_arrays

log = logging.getLogger(__name__)

TUNE_EPOCHS = 30
EVAL_EPOCHS = 50
TUNING_FRACTION = 0.5
INNER_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class HyperConfig:
    hidden_size: int
    learning_rate: float
    batch_size: int
    layers: int = 1

    def key(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:10]

    def train_config(self, epochs: int, seed: int, weight_decay: float = 1e-5, clip_norm: float = 1.0) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, epochs, weight_decay, clip_norm, seed)


@dataclass(frozen=True)
class HyperGrid:
    hidden_sizes: tuple[int, ...] = (4, 8, 12)
    learning_rates: tuple[float, ...] = (5e-3, 1e-3)
    batch_sizes: tuple[int, ...] = (32, 64)
    layers: tuple[int, ...] = (1,)

    def __post_init__(self):
        if set(self.layers) != {1}:
            raise ValueError("only single-layer cells are supported")

    def configs(self) -> list[HyperConfig]:
        return [HyperConfig(*c) for c in itertools.product(self.hidden_sizes, self.learning_rates, self.batch_sizes, self.layers)]

    @classmethod
    def from_dict(cls, d: dict) -> HyperGrid:
        return cls(**{k: tuple(v) for k, v in d.items()})


def derive_seed(master: int, *keys: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# -- Phase 1 ------------------------------------------------------------------


@dataclass
class GridResult:
    arch: ArchKind
    best: HyperConfig
    rows: list[dict]


def _grid_task(task):
    arch, hyper, d, seed, cfg, Xtr, Gtr, ytr, Xva, Gva, yva = task
    p = init_params(arch, hyper.hidden_size, d, seed)
    try:
        res = train_arrays(p, Xtr, Gtr, ytr, cfg)
        pred = predict(res.params, Xva, Gva)
        r = validation_pearson(yva, pred) if np.all(np.isfinite(pred)) else float("nan")
        final_loss = res.losses[-1] if res.losses else float("nan")
    except (LnnForecastError, FloatingPointError) as exc:
        log.warning("grid config %s failed: %s", hyper, exc)
        r, final_loss = float("nan"), float("nan")
    return r, final_loss


def grid_search(
    arch,
    tuning_frame: pd.DataFrame,
    grid: HyperGrid = HyperGrid(),
    epochs: int = TUNE_EPOCHS,
    seed: int = 0,
    jobs: int = 1,
    audit: RowAudit | None = None,
    weight_decay: float = 1e-5,
    clip_norm: float = 1.0,
) -> GridResult:
    """Train every grid point on the inner-training 80% and pick the best validation Pearson r.

    Validation windows may reach back into inner-training rows for their
    inputs; their targets are all inner-validation rows.
    """
    arch = ArchKind.parse(arch)
    data = ModelData.from_frame(tuning_frame, arch, audit)
    data.audit_key = "grid"
    n = len(data)
    k = split_point(n, INNER_TRAIN_FRACTION)
    scaler = data.fit_scaler(0, k)
    Xtr, Gtr, ytr, _ = data.sample_arrays(scaler, 0, k)
    Xva, Gva, yva, _ = data.sample_arrays(scaler, max(0, k - WINDOW_LENGTH), n)
    d = data.features.shape[1]
    configs = grid.configs()
    tasks = []
    for i, hyper in enumerate(configs):
        s = derive_seed(seed, 1, i)
        tasks.append((arch, hyper, d, s, hyper.train_config(epochs, s, weight_decay, clip_norm), Xtr, Gtr, ytr, Xva, Gva, yva))
    results = _map(_grid_task, tasks, jobs)
    rows = []
    for i, (hyper, (r, loss)) in enumerate(zip(configs, results)):
        rows.append({"order": i, **asdict(hyper), "seed": tasks[i][3], "val_pearson_r": r, "final_train_loss": loss})
        log.info("%s %s: val r=%.4f", arch.value, hyper, r)
    valid = [row for row in rows if math.isfinite(row["val_pearson_r"])]
    if not valid:
        raise NoValidConfig(f"{arch.value}: no configuration produced a defined validation correlation")
    best_row = min(valid, key=lambda row: (-row["val_pearson_r"], row["hidden_size"], -row["batch_size"], row["order"]))
    return GridResult(arch, configs[best_row["order"]], rows)


# -- Phase 2 ------------------------------------------------------------------


def stratified_indices(eval_start: int, eval_end: int, K: int = 20, k: int = 8) -> list[int]:
    """``k`` evenly spaced indices from each of ``K`` contiguous bins of [eval_start, eval_end).

    Bins differ in length by at most one row; the earliest bins take the
    remainder.  Both bin endpoints are always selected (for k >= 2).
    """
    span = eval_end - eval_start
    if K < 1 or k < 1:
        raise ValueError("K and k must be positive")
    if span < K * k:
        raise SpanTooShort(f"span of {span} rows cannot host {K} bins of {k} points")
    base, extra = divmod(span, K)
    out = []
    start = eval_start
    for b in range(K):
        length = base + (1 if b < extra else 0)
        if k == 1:
            offsets = [0]
        else:
            offsets = [math.floor(j * (length - 1) / (k - 1) + 0.5) for j in range(k)]
        out.extend(start + o for o in offsets)
        start += length
    return out


def eval_span(n_rows: int, fraction: float = TUNING_FRACTION, L: int = WINDOW_LENGTH) -> tuple[int, int]:
    """Half-open range of admissible ``t_eval`` rows in the evaluation half."""
    return max(split_point(n_rows, fraction), L), n_rows - 1


@dataclass(frozen=True)
class EvalRecord:
    t_eval: int
    date: object
    y: float
    y_hat: float


@dataclass
class EvalRun:
    arch: ArchKind
    hyper: HyperConfig
    records: list[EvalRecord]
    failures: dict[int, str] = field(default_factory=dict)
    seeds: dict[int, int] = field(default_factory=dict)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records])

    @property
    def y_hat(self) -> np.ndarray:
        return np.array([r.y_hat for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": [r.t_eval for r in self.records],
                "date": [pd.Timestamp(r.date).strftime("%Y-%m-%d") for r in self.records],
                "actual": [r.y for r in self.records],
                "predicted": [r.y_hat for r in self.records],
                "arch": self.arch.value,
                "config_hash": self.hyper.key(),
            }
        )


def _eval_task(task):
    arch, n_hidden, d, seed, cfg, X, G, y, window, wgaps = task
    p = init_params(arch, n_hidden, d, seed)
    try:
        res = train_arrays(p, X, G, y, cfg)
        y_hat = float(forward_batch(res.params, window[None], wgaps[None])[0])
        if not math.isfinite(y_hat):
            return None, "non-finite forecast"
        return y_hat, None
    except (LnnForecastError, FloatingPointError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def expanding_window_eval(
    arch,
    frame: pd.DataFrame,
    hyper: HyperConfig,
    indices,
    epochs: int = EVAL_EPOCHS,
    seed: int = 0,
    jobs: int = 1,
    audit: RowAudit | None = None,
    weight_decay: float = 1e-5,
    clip_norm: float = 1.0,
) -> EvalRun:
    """Retrain from scratch at every index on all rows up to it and forecast the next return."""
    arch = ArchKind.parse(arch)
    data = ModelData.from_frame(frame, arch, audit)
    d = data.features.shape[1]
    run = EvalRun(arch, hyper, [])
    tasks = []
    for t in indices:
        t = int(t)
        if t < WINDOW_LENGTH or t + 1 >= len(data):
            run.failures[t] = "index lacks history or a next-row target"
            continue
        data.audit_key = t
        scaler = data.fit_scaler(0, t + 1)
        X, G, y, _ = data.sample_arrays(scaler, 0, t + 1)
        window, wgaps = data.input_window(scaler, t)
        s = derive_seed(seed, 2, t)
        run.seeds[t] = s
        tasks.append((t, (arch, hyper.hidden_size, d, s, hyper.train_config(epochs, s, weight_decay, clip_norm), X, G, y, window, wgaps)))
    results = _map(_eval_task, [task for _, task in tasks], jobs)
    for (t, _), (y_hat, err) in zip(tasks, results):
        if err is not None:
            run.failures[t] = err
            log.warning("%s index %d failed: %s", arch.value, t, err)
            continue
        run.records.append(EvalRecord(t, data.dates[t], float(data.returns[t + 1]), y_hat))
    if not run.records:
        raise NoValidConfig(f"{arch.value}: every evaluation index failed")
    return run


def validation_pearson(y, y_hat) -> float:
    try:
        return pearson(y, y_hat)
    except UndefinedCorrelation:
        return float("nan")
