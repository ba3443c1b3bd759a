"""CSV ingestion, cleaning, return construction, feature selection and window assembly.

A ``TimeSeriesFrame`` is a pandas DataFrame indexed by ``Date`` (ascending,
unique) that carries the canonical columns below plus any number of named
predictor columns.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from lnnforecast.cells import WINDOW_LENGTH, ArchKind
from lnnforecast.errors import (
    DegenerateSplit,
    DuplicateDateWithinSource,
    EmptyJoin,
    MissingExpectedColumn,
    NonPositivePrice,
    RangeTooShort,
    UnparseableDate,
)
from lnnforecast.numerics import Standardizer, apply_standardizer, fit_standardizer

log = logging.getLogger(__name__)

DATE = "Date"
PRICE = "Spot Price"
RETURN = "Spot Return"
GAP = "Gap Days"
AR1_PRICE = "AR1 Spot Price"
RETURN_LAG = "Spot Return lag-1"

# never model inputs for the neural cells
NEURAL_EXCLUDED = (DATE, RETURN, PRICE, AR1_PRICE, GAP)
OUTLIER_SIGMAS = 5.5

TimeSeriesFrame = pd.DataFrame


# -- schema -------------------------------------------------------------------


@dataclass
class ColumnSpec:
    source: str
    name: str
    role: str = "feature"
    sparse: bool = False


@dataclass
class SourceSpec:
    path: Path
    columns: list[ColumnSpec]
    date_column: str = "Date"
    date_format: str | None = None


@dataclass
class Schema:
    sources: list[SourceSpec] = field(default_factory=list)

    @property
    def sparse_columns(self) -> list[str]:
        return [c.name for s in self.sources for c in s.columns if c.sparse]


def load_schema(path) -> Schema:
    """Read a JSON schema; relative source paths resolve against the schema's directory.

    Layout::

        {"sources": [{"path": "henry_hub.csv", "date_column": "Day",
                      "date_format": "%m/%d/%Y",
                      "columns": [{"source": "Price", "name": "Spot Price",
                                   "role": "target_price"}]}]}
    """
    path = Path(path)
    if not path.exists():
        raise MissingExpectedColumn(f"schema file not found: {path}")
    raw = json.loads(path.read_text())
    sources = []
    for s in raw.get("sources", []):
        cols = [ColumnSpec(c["source"], c.get("name", c["source"]), c.get("role", "feature"), bool(c.get("sparse", False))) for c in s["columns"]]
        src_path = Path(s["path"])
        if not src_path.is_absolute():
            src_path = path.parent / src_path
        sources.append(SourceSpec(src_path, cols, s.get("date_column", "Date"), s.get("date_format")))
    schema = Schema(sources)
    n_target = sum(c.role == "target_price" for s in schema.sources for c in s.columns)
    if n_target != 1:
        raise MissingExpectedColumn(f"schema must declare exactly one target_price column, found {n_target}")
    return schema


def _read_source(spec: SourceSpec) -> pd.DataFrame:
    df = pd.read_csv(spec.path)
    if spec.date_column not in df.columns:
        raise MissingExpectedColumn(f"{spec.path}: no date column {spec.date_column!r}")
    try:
        dates = pd.to_datetime(df[spec.date_column], format=spec.date_format)
    except (ValueError, TypeError) as exc:
        raise UnparseableDate(f"{spec.path}: {exc}") from exc
    if dates.isna().any():
        raise UnparseableDate(f"{spec.path}: empty date cell")
    if dates.duplicated().any():
        dup = dates[dates.duplicated()].iloc[0]
        raise DuplicateDateWithinSource(f"{spec.path}: duplicate date {dup.date()}")
    out = pd.DataFrame(index=pd.DatetimeIndex(dates, name=DATE))
    for col in spec.columns:
        if col.source not in df.columns:
            raise MissingExpectedColumn(f"{spec.path}: no column {col.source!r}")
        name = PRICE if col.role == "target_price" else col.name
        values = df[col.source]
        if values.dtype == object:
            values = values.astype(str).str.replace(",", "", regex=False)
        out[name] = pd.to_numeric(values, errors="coerce").to_numpy()
    return out


def canonical_order(frame: pd.DataFrame) -> pd.DataFrame:
    head = [c for c in (PRICE, RETURN, GAP, AR1_PRICE, RETURN_LAG) if c in frame.columns]
    rest = sorted(c for c in frame.columns if c not in head)
    return frame[head + rest]


def load_and_merge(sources) -> TimeSeriesFrame:
    """Inner-join sources on date.  ``sources`` is a ``Schema`` or a list of ``SourceSpec``."""
    specs = sources.sources if isinstance(sources, Schema) else list(sources)
    if not specs:
        raise EmptyJoin("no sources given")
    merged = None
    for spec in specs:
        df = _read_source(spec)
        merged = df if merged is None else merged.join(df, how="inner")
    if merged is None or len(merged) == 0:
        raise EmptyJoin("sources share no dates")
    return canonical_order(merged.sort_index())


# -- cleaning -------------------------------------------------------------------


@dataclass
class RemovalReport:
    input_rows: int
    sparse_columns: list[str]
    missing: int = 0
    outlier: int = 0
    leading: int = 0
    output_rows: int = 0

    @property
    def removed(self) -> int:
        return self.missing + self.outlier + self.leading

    def summary(self) -> str:
        return (
            f"rows in: {self.input_rows}, removed: {self.removed} "
            f"(missing={self.missing}, outlier={self.outlier}, leading={self.leading}), "
            f"rows out: {self.output_rows}; sparse columns dropped: {len(self.sparse_columns)}"
        )


def clean(frame: TimeSeriesFrame, sparse_columns=()) -> tuple[TimeSeriesFrame, RemovalReport]:
    """Drop sparse columns, incomplete rows, and price-level outliers.

    The outlier rule uses the median and sample std of the price series as
    it stands before any row is removed.  A row that is both incomplete and
    an outlier counts as missing.
    """
    dropped = [c for c in sparse_columns if c in frame.columns]
    out = frame.drop(columns=dropped)
    report = RemovalReport(input_rows=len(frame), sparse_columns=dropped)
    missing = out.isna().any(axis=1).to_numpy()
    outlier = np.zeros(len(out), dtype=bool)
    if PRICE in out.columns:
        price = out[PRICE].to_numpy(dtype=np.float64)
        ok = np.isfinite(price)
        if ok.sum() > 1:
            med = np.median(price[ok])
            sd = np.std(price[ok], ddof=1)
            with np.errstate(invalid="ignore"):
                outlier = ok & (np.abs(price - med) > OUTLIER_SIGMAS * sd)
    report.missing = int(missing.sum())
    report.outlier = int((outlier & ~missing).sum())
    out = out[~(missing | outlier)]
    report.output_rows = len(out)
    if len(out) == 0:
        log.warning("cleaning removed every row")
    return out, report


def compute_returns(frame: TimeSeriesFrame) -> TimeSeriesFrame:
    """Add percent returns, calendar gaps, lagged price and lagged return.

    Leading rows where a derived value is undefined hold NaN; see
    :func:`drop_leading_undefined`.
    """
    if PRICE not in frame.columns:
        raise MissingExpectedColumn(f"frame has no {PRICE!r} column")
    price = frame[PRICE].to_numpy(dtype=np.float64)
    if np.any(price <= 0):
        raise NonPositivePrice("spot prices must be positive")
    out = frame.copy()
    ret = np.full(len(price), np.nan)
    ret[1:] = 100.0 * (price[1:] - price[:-1]) / price[:-1]
    out[RETURN] = ret
    days = np.ones(len(price))
    if len(price) > 1:
        diff = np.diff(frame.index.values).astype("timedelta64[D]").astype(np.int64)
        days[1:] = np.maximum(diff, 1)
    out[GAP] = days
    lag_price = np.full(len(price), np.nan)
    lag_price[1:] = price[:-1]
    out[AR1_PRICE] = lag_price
    lag_ret = np.full(len(price), np.nan)
    lag_ret[1:] = ret[:-1]
    out[RETURN_LAG] = lag_ret
    return canonical_order(out)


def drop_leading_undefined(frame: TimeSeriesFrame) -> tuple[TimeSeriesFrame, int]:
    ok = frame.notna().all(axis=1).to_numpy()
    first = int(np.argmax(ok)) if ok.any() else len(frame)
    return frame.iloc[first:], first


def prepare_frame(schema: Schema) -> tuple[TimeSeriesFrame, RemovalReport]:
    merged = load_and_merge(schema)
    cleaned, report = clean(merged, schema.sparse_columns)
    with_returns = compute_returns(cleaned)
    final, lead = drop_leading_undefined(with_returns)
    report.leading = lead
    report.output_rows = len(final)
    return final, report


def write_frame(frame: TimeSeriesFrame, path) -> None:
    frame = canonical_order(frame)
    frame.to_csv(path, index=True, index_label=DATE, date_format="%Y-%m-%d", float_format="%.17g")


def read_frame(path) -> TimeSeriesFrame:
    df = pd.read_csv(path, parse_dates=[DATE]).set_index(DATE)
    return canonical_order(df)


# -- features and samples -----------------------------------------------------


def feature_columns(frame: TimeSeriesFrame, arch) -> list[str]:
    if RETURN not in frame.columns:
        raise MissingExpectedColumn(f"frame has no {RETURN!r} column")
    arch = ArchKind.parse(arch)
    excluded = set(NEURAL_EXCLUDED)
    if arch is ArchKind.CTLTC:
        if RETURN_LAG not in frame.columns:
            raise MissingExpectedColumn(f"CT-LTC needs {RETURN_LAG!r} to exclude it")
        excluded.add(RETURN_LAG)
    return [c for c in frame.columns if c not in excluded]


def select_features(frame: TimeSeriesFrame, arch) -> tuple[np.ndarray, list[str]]:
    names = feature_columns(frame, arch)
    return frame[names].to_numpy(dtype=np.float64), names


def baseline_columns(frame: TimeSeriesFrame) -> list[str]:
    """Regressors for the linear baseline: the return itself plus the exogenous block.

    They are read one row behind the forecast target, so ``Spot Return``
    here plays the role of the lagged return.
    """
    if RETURN not in frame.columns:
        raise MissingExpectedColumn(f"frame has no {RETURN!r} column")
    excluded = set(NEURAL_EXCLUDED) | {RETURN_LAG}
    return [RETURN] + [c for c in frame.columns if c not in excluded]


def split_point(n: int, fraction: float) -> int:
    if not 0.0 < fraction < 1.0:
        raise DegenerateSplit(f"fraction must lie in (0, 1), got {fraction}")
    k = int(np.floor(fraction * n))
    if k == 0 or k == n:
        raise DegenerateSplit(f"split of {n} rows at {fraction} leaves an empty side")
    return k


def chronological_split(frame: TimeSeriesFrame, fraction: float):
    k = split_point(len(frame), fraction)
    return frame.iloc[:k], frame.iloc[k:]


@dataclass
class SequenceSample:
    window: np.ndarray
    gaps: np.ndarray
    target: float
    t_eval: int


class RowAudit:
    """Records which frame rows each stage reads, for leakage checks."""

    def __init__(self):
        self.reads: list[tuple[str, object, int, int]] = []

    def record(self, tag: str, key, start: int, stop: int) -> None:
        if stop > start:
            self.reads.append((tag, key, int(start), int(stop)))

    def max_row(self, tag: str | None = None, key=None) -> int:
        rows = [stop - 1 for t, k, _, stop in self.reads if (tag is None or t == tag) and (key is None or k == key)]
        return max(rows) if rows else -1


@dataclass
class ModelData:
    """Positional arrays for one architecture's view of a frame."""

    features: np.ndarray
    returns: np.ndarray
    gaps: np.ndarray
    dates: np.ndarray
    names: list[str]
    audit: RowAudit | None = None
    audit_key: object = None

    @classmethod
    def from_frame(cls, frame: TimeSeriesFrame, arch, audit: RowAudit | None = None) -> ModelData:
        X, names = select_features(frame, arch)
        gaps = frame[GAP].to_numpy(dtype=np.float64) if GAP in frame.columns else np.ones(len(frame))
        return cls(X, frame[RETURN].to_numpy(dtype=np.float64), gaps, frame.index.values, names, audit)

    def __len__(self) -> int:
        return self.features.shape[0]

    def _note(self, tag, start, stop):
        if self.audit is not None:
            self.audit.record(tag, self.audit_key, start, stop)

    def fit_scaler(self, start: int, stop: int) -> Standardizer:
        self._note("scaler", start, stop)
        return fit_standardizer(self.features[start:stop])

    def sample_arrays(self, scaler: Standardizer, start: int, stop: int, L: int = WINDOW_LENGTH):
        """Stacked windows, gaps, targets, and window-end rows for every sample inside [start, stop)."""
        count = stop - start - L
        if count < 1:
            raise RangeTooShort(f"span [{start}, {stop}) holds no {L}-row window with a target")
        self._note("inputs", start, stop - 1)
        self._note("targets", start + L, stop)
        Z = apply_standardizer(scaler, self.features[start : stop - 1])
        X = np.lib.stride_tricks.sliding_window_view(Z, L, axis=0).transpose(0, 2, 1)
        G = np.lib.stride_tricks.sliding_window_view(self.gaps[start : stop - 1], L).copy()
        G[:, 0] = 1.0
        y = self.returns[start + L : stop]
        t_eval = np.arange(start + L - 1, stop - 1)
        return np.ascontiguousarray(X), G, y.copy(), t_eval

    def input_window(self, scaler: Standardizer, t_eval: int, L: int = WINDOW_LENGTH):
        """The standardized window ending at ``t_eval`` and its gaps (no target read)."""
        if t_eval - L + 1 < 0:
            raise RangeTooShort(f"row {t_eval} has fewer than {L} rows of history")
        self._note("inputs", t_eval - L + 1, t_eval + 1)
        X = apply_standardizer(scaler, self.features[t_eval - L + 1 : t_eval + 1])
        G = self.gaps[t_eval - L + 1 : t_eval + 1].copy()
        G[0] = 1.0
        return X, G


def make_samples(data: ModelData, scaler: Standardizer, span, L: int = WINDOW_LENGTH) -> list[SequenceSample]:
    start, stop = (span.start, span.stop) if isinstance(span, range) else span
    X, G, y, t_eval = data.sample_arrays(scaler, start, stop, L)
    return [SequenceSample(X[i], G[i], float(y[i]), int(t_eval[i])) for i in range(len(y))]
