import itertools
import json

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lnnforecast.dataset import (
    AR1_PRICE,
    DATE,
    GAP,
    PRICE,
    RETURN,
    RETURN_LAG,
    ColumnSpec,
    ModelData,
    RowAudit,
    SourceSpec,
    baseline_columns,
    chronological_split,
    clean,
    compute_returns,
    drop_leading_undefined,
    feature_columns,
    load_and_merge,
    load_schema,
    make_samples,
    prepare_frame,
    read_frame,
    select_features,
    split_point,
    write_frame,
)
from lnnforecast.errors import (
    DegenerateSplit,
    DuplicateDateWithinSource,
    EmptyJoin,
    MissingExpectedColumn,
    NonPositivePrice,
    RangeTooShort,
    UnparseableDate,
)


def write_source(tmp_path, name, dates, **cols):
    path = tmp_path / name
    pd.DataFrame({"Day": dates, **cols}).to_csv(path, index=False)
    return path


def spec(path, *names, target=None):
    cols = [ColumnSpec(n, n) for n in names]
    if target:
        cols.insert(0, ColumnSpec(target, PRICE, "target_price"))
    return SourceSpec(path, cols, date_column="Day")


# -- merge --------------------------------------------------------------------


def test_merge_keeps_shared_dates(tmp_path):
    a = write_source(tmp_path, "a.csv", ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-06", "2020-01-07"], p=[1, 2, 3, 4, 5])
    b = write_source(tmp_path, "b.csv", ["2020-01-02", "2020-01-03", "2020-01-07", "2020-01-08", "2020-01-09"], x=[9, 8, 7, 6, 5])
    merged = load_and_merge([spec(a, target="p"), spec(b, "x")])
    assert len(merged) == 3
    assert list(merged.index.strftime("%Y-%m-%d")) == ["2020-01-02", "2020-01-03", "2020-01-07"]
    assert list(merged[PRICE]) == [2, 3, 5] and list(merged["x"]) == [9, 8, 7]


def test_single_source_is_identity(tmp_path):
    dates = ["2021-03-01", "2021-03-02", "2021-03-03"]
    a = write_source(tmp_path, "a.csv", dates, p=[1.5, 1.6, 1.7], z=[0.1, 0.2, 0.3])
    merged = load_and_merge([spec(a, "z", target="p")])
    assert list(merged.columns) == [PRICE, "z"]
    np.testing.assert_array_equal(merged["z"], [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(merged[PRICE], [1.5, 1.6, 1.7])


def test_rows_sorted_and_thousands_separators(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text('Day,p\n2020-01-03,"1,200.5"\n2020-01-01,3\n2020-01-02,4\n')
    merged = load_and_merge([spec(path, target="p")])
    assert merged.index.is_monotonic_increasing
    assert list(merged[PRICE]) == [3.0, 4.0, 1200.5]


def test_unparseable_date(tmp_path):
    a = write_source(tmp_path, "a.csv", ["2020-01-01", "not a date"], p=[1, 2])
    with pytest.raises(UnparseableDate):
        load_and_merge([spec(a, target="p")])


def test_duplicate_date_within_source(tmp_path):
    a = write_source(tmp_path, "a.csv", ["2020-01-01", "2020-01-01"], p=[1, 2])
    with pytest.raises(DuplicateDateWithinSource):
        load_and_merge([spec(a, target="p")])


def test_empty_join(tmp_path):
    a = write_source(tmp_path, "a.csv", ["2020-01-01"], p=[1])
    b = write_source(tmp_path, "b.csv", ["2020-01-02"], x=[1])
    with pytest.raises(EmptyJoin):
        load_and_merge([spec(a, target="p"), spec(b, "x")])


def test_merge_then_clean_is_source_order_insensitive(tmp_path):
    rng = np.random.default_rng(0)
    days = pd.bdate_range("2020-01-01", periods=40).strftime("%Y-%m-%d")
    srcs = [
        spec(write_source(tmp_path, "p.csv", days, p=3 + rng.random(40)), target="p"),
        spec(write_source(tmp_path, "a.csv", days[2:], a=rng.standard_normal(38)), "a"),
        spec(write_source(tmp_path, "b.csv", days[:-3], b=rng.standard_normal(37)), "b"),
    ]
    frames = [clean(load_and_merge(list(order)))[0] for order in itertools.permutations(srcs)]
    for f in frames[1:]:
        pd.testing.assert_frame_equal(f, frames[0])


def test_load_schema_resolves_relative_paths(tmp_path):
    write_source(tmp_path, "hh.csv", ["01/02/2020", "01/03/2020"], Price=[2.0, 2.1])
    (tmp_path / "schema.json").write_text(
        json.dumps({"sources": [{"path": "hh.csv", "date_column": "Day", "date_format": "%m/%d/%Y", "columns": [{"source": "Price", "role": "target_price"}]}]})
    )
    schema = load_schema(tmp_path / "schema.json")
    merged = load_and_merge(schema)
    assert merged[PRICE].tolist() == [2.0, 2.1]


def test_load_schema_missing_file(tmp_path):
    with pytest.raises(MissingExpectedColumn):
        load_schema(tmp_path / "absent.json")


def test_schema_needs_one_target(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"sources": [{"path": "a.csv", "columns": [{"source": "x"}]}]}))
    with pytest.raises(MissingExpectedColumn):
        load_schema(tmp_path / "s.json")


# -- cleaning -----------------------------------------------------------------


def _frame(prices, **cols):
    idx = pd.bdate_range("2020-01-01", periods=len(prices), name=DATE)
    return pd.DataFrame({PRICE: prices, **cols}, index=idx)


def test_clean_input_unchanged():
    f = _frame([2.0, 2.1, 2.2], x=[1.0, 2.0, 3.0])
    out, report = clean(f)
    pd.testing.assert_frame_equal(out, f)
    assert report.removed == 0 and report.output_rows == 3


def test_outlier_row_removed():
    # median 3, sample std ~2 even with the spike included, so |50 - 3| > 5.5 * 2
    prices = [3.0] * 499 + [1.0, 5.0] * 250 + [50.0]
    f = _frame(prices)
    med, sd = np.median(prices), np.std(prices, ddof=1)
    assert med == 3.0 and 2.0 < sd < 2.1
    out, report = clean(f)
    assert report.outlier == 1 and 50.0 not in out[PRICE].values and len(out) == len(prices) - 1


def test_missing_row_removed_and_sparse_column_dropped():
    f = _frame([2.0, 2.1, 2.2, 2.3], x=[1.0, np.nan, 3.0, 4.0], sparse=[np.nan] * 4)
    out, report = clean(f, sparse_columns=["sparse"])
    assert "sparse" not in out.columns
    assert report.missing == 1 and report.sparse_columns == ["sparse"] and len(out) == 3


# -- returns ------------------------------------------------------------------


def test_return_arithmetic():
    out = compute_returns(_frame([2.0, 2.1]))
    assert out[RETURN].iloc[1] == pytest.approx(5.0, rel=1e-12)
    assert np.isnan(out[RETURN].iloc[0])


def test_constant_price_zero_return():
    out = compute_returns(_frame([3.0] * 6))
    np.testing.assert_array_equal(out[RETURN].iloc[1:], 0.0)


def test_weekend_gap():
    idx = pd.DatetimeIndex(["2024-05-09", "2024-05-10", "2024-05-13"], name=DATE)  # Thu, Fri, Mon
    out = compute_returns(pd.DataFrame({PRICE: [1.0, 1.1, 1.2]}, index=idx))
    assert out[GAP].tolist() == [1.0, 1.0, 3.0]


def test_lagged_columns():
    out = compute_returns(_frame([2.0, 2.5, 2.0]))
    assert out[AR1_PRICE].iloc[2] == 2.5
    assert out[RETURN_LAG].iloc[2] == pytest.approx(25.0)
    trimmed, lead = drop_leading_undefined(out)
    assert lead == 2 and len(trimmed) == 1


def test_non_positive_price():
    with pytest.raises(NonPositivePrice):
        compute_returns(_frame([1.0, 0.0, 2.0]))


@given(st.lists(st.floats(0.5, 20.0), min_size=2, max_size=60))
def test_prices_reconstruct_from_returns(prices):
    out = compute_returns(_frame(prices))
    r = out[RETURN].to_numpy()[1:]
    rebuilt = prices[0] * np.cumprod(1 + r / 100)
    np.testing.assert_allclose(rebuilt, prices[1:], rtol=1e-10)


# -- features -----------------------------------------------------------------


def _full_frame(n=50, extra=("a", "b")):
    rng = np.random.default_rng(1)
    f = _frame(3 + rng.random(n), **{c: rng.standard_normal(n) for c in extra})
    return drop_leading_undefined(compute_returns(f))[0]


def test_exclusion_arithmetic():
    f = _frame([1.0, 2.0], a=[0.0, 1.0], b=[1.0, 0.0])
    f[RETURN] = 0.0
    f[AR1_PRICE] = 1.0
    f["Date"] = 0  # the fourth excluded name, present as a column
    assert feature_columns(f, "LSTM") == ["a", "b"]


@pytest.mark.parametrize("arch", ["LSTM", "StrictCfC", "LTC", "HybridCfC"])
def test_lagged_return_kept_for_discrete_cells(arch):
    names = feature_columns(_full_frame(), arch)
    assert RETURN_LAG in names and RETURN not in names and len(names) == 3


def test_ctltc_drops_lagged_return():
    names = feature_columns(_full_frame(), "CTLTC")
    assert names == ["a", "b"]
    X, _ = select_features(_full_frame(), "CTLTC")
    assert X.shape[1] == 2


def test_ctltc_requires_lagged_return_column():
    f = _full_frame().drop(columns=[RETURN_LAG])
    with pytest.raises(MissingExpectedColumn):
        feature_columns(f, "CTLTC")


def test_baseline_columns_lead_with_return():
    assert baseline_columns(_full_frame()) == [RETURN, "a", "b"]


# -- splits -------------------------------------------------------------------


@pytest.mark.parametrize("n,head", [(10, 5), (11, 5), (2645, 1322)])
def test_split_sizes(n, head):
    assert split_point(n, 0.5) == head
    f = _frame(np.ones(n) * 2.0)
    h, t = chronological_split(f, 0.5)
    assert len(h) == head and len(t) == n - head
    assert h.index.max() < t.index.min()


@pytest.mark.parametrize("n,frac", [(1, 0.5), (10, 0.0), (10, 1.0), (3, 0.2)])
def test_degenerate_split(n, frac):
    with pytest.raises(DegenerateSplit):
        split_point(n, frac)


# -- samples ------------------------------------------------------------------


def _model_data(n=60):
    return ModelData.from_frame(_full_frame(n + 2), "LSTM")


@pytest.mark.parametrize("span,count", [(31, 1), (40, 10)])
def test_sample_counts(span, count):
    data = _model_data()
    scaler = data.fit_scaler(0, span)
    assert len(make_samples(data, scaler, (0, span))) == count


def test_range_too_short():
    data = _model_data()
    with pytest.raises(RangeTooShort):
        make_samples(data, data.fit_scaler(0, 30), (0, 30))


def test_windows_slide_by_one_row():
    data = _model_data()
    samples = make_samples(data, data.fit_scaler(0, 45), (0, 45))
    for a, b in zip(samples, samples[1:]):
        np.testing.assert_array_equal(a.window[1:], b.window[:-1])
        assert b.t_eval == a.t_eval + 1


def test_samples_are_causal_and_targets_raw():
    data = _model_data()
    samples = make_samples(data, data.fit_scaler(3, 50), (3, 50))
    for s in samples:
        window_dates = data.dates[s.t_eval - 29 : s.t_eval + 1]
        target_row = s.t_eval + 1
        assert data.dates[target_row] > window_dates.max()
        assert s.target == data.returns[target_row]
        np.testing.assert_allclose(s.window, data.fit_scaler(3, 50).transform(data.features[s.t_eval - 29 : s.t_eval + 1]))


def test_audit_records_half_open_reads():
    audit = RowAudit()
    data = ModelData.from_frame(_full_frame(62), "LTC", audit)
    data.audit_key = "k"
    data.sample_arrays(data.fit_scaler(0, 40), 0, 40)
    assert audit.max_row("targets", "k") == 39
    assert audit.max_row("inputs", "k") == 38
    assert audit.max_row("scaler") == 39


def test_frame_csv_round_trip(tmp_path):
    f = _full_frame()
    write_frame(f, tmp_path / "frame.csv")
    back = read_frame(tmp_path / "frame.csv")
    pd.testing.assert_frame_equal(back, f, check_freq=False, check_dtype=False)


def test_prepare_frame_reports_every_removal(tmp_path):
    days = pd.bdate_range("2020-01-01", periods=60).strftime("%Y-%m-%d")
    prices = np.full(60, 3.0) + np.linspace(0, 0.5, 60)
    prices[10] = 500.0
    x = np.arange(60.0)
    x[20] = np.nan
    write_source(tmp_path, "s.csv", days, Price=prices, x=x)
    (tmp_path / "schema.json").write_text(
        json.dumps({"sources": [{"path": "s.csv", "date_column": "Day", "columns": [{"source": "Price", "role": "target_price"}, {"source": "x"}]}]})
    )
    frame, report = prepare_frame(load_schema(tmp_path / "schema.json"))
    assert (report.missing, report.outlier, report.leading) == (1, 1, 2)
    assert report.output_rows == len(frame) == 56
    assert not frame.isna().any().any()
