"""Batch command-line front end.

    lnnforecast prepare  --config run.json
    lnnforecast tune     --config run.json --arch HybridCfC
    lnnforecast evaluate --config run.json --arch HybridCfC
    lnnforecast baseline --config run.json
    lnnforecast bootstrap --config run.json --arch HybridCfC   # or --arch baseline
    lnnforecast report   --config run.json
    lnnforecast plotdata --config run.json

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from lnnforecast.baseline import BaselineConfig, rolling_forecast
from lnnforecast.bootstrap import BootstrapReport, MetricSummary, bootstrap_metrics
from lnnforecast.cells import WINDOW_LENGTH, ArchKind
from lnnforecast.dataset import (
    PRICE,
    RETURN,
    chronological_split,
    load_schema,
    prepare_frame,
    read_frame,
    split_point,
    write_frame,
)
from lnnforecast.errors import DataError, LnnForecastError, NumericalError, ZeroVarianceErrors
from lnnforecast.metrics import METRIC_LABELS, METRIC_NAMES, bias_test, compute_metrics
from lnnforecast.numerics import acf
from lnnforecast.protocol import (
    HyperConfig,
    HyperGrid,
    eval_span,
    expanding_window_eval,
    grid_search,
    stratified_indices,
)

log = logging.getLogger("lnnforecast")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ARCH_ORDER = [ArchKind.LSTM, ArchKind.STRICT_CFC, ArchKind.LTC, ArchKind.HYBRID_CFC, ArchKind.CTLTC]
DISPLAY = {
    "baseline": "Baseline",
    ArchKind.LSTM: "LSTM",
    ArchKind.STRICT_CFC: "Strict CfC",
    ArchKind.LTC: "LTC",
    ArchKind.HYBRID_CFC: "Hybrid CfC",
    ArchKind.CTLTC: "CT-LTC",
}


class UsageError(Exception):
    pass


class MissingArtifact(DataError):
    pass


@dataclass
class Protocol:
    W: int = 30
    L: int = 30
    K: int = 20
    k: int = 8
    B: int = 300
    tune_epochs: int = 30
    eval_epochs: int = 50
    weight_decay: float = 1e-5
    clip_norm: float = 1.0
    acf_lags: int = 40


@dataclass
class RunConfig:
    data_dir: Path = Path(".")
    output_dir: Path = Path("out")
    schema: Path | None = None
    seed: int = 0
    jobs: int = 1
    grid: HyperGrid = field(default_factory=HyperGrid)
    protocol: Protocol = field(default_factory=Protocol)

    @classmethod
    def load(cls, path) -> RunConfig:
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        raw = json.loads(path.read_text())
        base = path.parent

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        cfg = cls(
            data_dir=resolve(raw.get("data_dir", ".")),
            output_dir=resolve(raw.get("output_dir", "out")),
            schema=resolve(raw["schema"]) if raw.get("schema") else None,
            seed=int(raw.get("seed", 0)),
            jobs=int(raw.get("jobs", 1)),
            grid=HyperGrid.from_dict(raw["grid"]) if "grid" in raw else HyperGrid(),
            protocol=Protocol(**raw.get("protocol", {})),
        )
        if cfg.protocol.L != WINDOW_LENGTH:
            raise UsageError(f"input window length is fixed at {WINDOW_LENGTH}")
        return cfg

    def out(self, name: str) -> Path:
        return self.output_dir / name


def _frame(cfg: RunConfig) -> pd.DataFrame:
    path = cfg.out("frame.csv")
    if not path.exists():
        raise MissingArtifact(f"{path} missing; run `prepare` first")
    return read_frame(path)


def _arch(name: str | None, allow_baseline: bool = False):
    if name is None:
        raise UsageError("--arch is required")
    if allow_baseline and name.lower() == "baseline":
        return "baseline"
    try:
        return ArchKind.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


# -- commands -----------------------------------------------------------------


def cmd_prepare(cfg: RunConfig, args) -> int:
    if cfg.schema is None:
        raise UsageError("config has no `schema` entry")
    schema = load_schema(cfg.schema)
    frame, report = prepare_frame(schema)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_frame(frame, cfg.out("frame.csv"))
    _write_json(cfg.out("removal_report.json"), {**asdict(report), "removed": report.removed})
    print(report.summary())
    print(f"wrote {cfg.out('frame.csv')} ({len(frame)} rows, {frame.shape[1]} columns)")
    return EXIT_OK


def cmd_tune(cfg: RunConfig, args) -> int:
    arch = _arch(args.arch)
    frame = _frame(cfg)
    tuning, _ = chronological_split(frame, 0.5)
    p = cfg.protocol
    res = grid_search(arch, tuning, cfg.grid, p.tune_epochs, cfg.seed, cfg.jobs, weight_decay=p.weight_decay, clip_norm=p.clip_norm)
    manifest = {
        "arch": arch.value,
        "seed": cfg.seed,
        "tuning_rows": len(tuning),
        "inner_train_rows": split_point(len(tuning), 0.8),
        "epochs": p.tune_epochs,
        "results": res.rows,
        "selected": asdict(res.best),
    }
    _write_json(cfg.out(f"tune_{arch.value}.json"), manifest)
    print(f"{arch.value}: {len(res.rows)} configurations; selected {res.best}")
    return EXIT_OK


def _load_best(cfg: RunConfig, arch: ArchKind) -> HyperConfig:
    path = cfg.out(f"tune_{arch.value}.json")
    if not path.exists():
        raise MissingArtifact(f"{path} missing; run `tune --arch {arch.value}` first")
    return HyperConfig(**json.loads(path.read_text())["selected"])


def cmd_evaluate(cfg: RunConfig, args) -> int:
    arch = _arch(args.arch)
    frame = _frame(cfg)
    best = _load_best(cfg, arch)
    p = cfg.protocol
    start, end = eval_span(len(frame))
    indices = stratified_indices(start, end, p.K, p.k)
    run = expanding_window_eval(arch, frame, best, indices, p.eval_epochs, cfg.seed, cfg.jobs, weight_decay=p.weight_decay, clip_norm=p.clip_norm)
    df = run.to_frame()
    df.to_csv(cfg.out(f"eval_{arch.value}.csv"), index=False, float_format="%.17g")
    manifest = {
        "arch": arch.value,
        "rows": len(frame),
        "split_point": split_point(len(frame), 0.5),
        "eval_span": [start, end],
        "K": p.K,
        "k": p.k,
        "indices": indices,
        "master_seed": cfg.seed,
        "index_seeds": {str(t): s for t, s in run.seeds.items()},
        "config": asdict(best),
        "config_hash": best.key(),
        "epochs": p.eval_epochs,
        "failures": {str(t): msg for t, msg in run.failures.items()},
    }
    _write_json(cfg.out(f"eval_{arch.value}_manifest.json"), manifest)
    m = compute_metrics(run.y, run.y_hat)
    print(f"{arch.value}: {len(run.records)}/{len(indices)} forecasts; r={m.pearson_r:.4f} R2={m.r_squared:.4f}")
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, args) -> int:
    frame = _frame(cfg)
    fc = rolling_forecast(frame, BaselineConfig(window=cfg.protocol.W))
    out = fc.assign(date=pd.to_datetime(fc["date"]).dt.strftime("%Y-%m-%d"))[["date", "actual", "predicted"]]
    out.to_csv(cfg.out("baseline_forecasts.csv"), index=False, float_format="%.17g")
    m = compute_metrics(fc["actual"], fc["predicted"])
    _write_metrics_csv(cfg.out("baseline_metrics.csv"), [("Baseline", m)])
    print(f"baseline: {len(fc)} forecasts; r={m.pearson_r:.4f} R2={m.r_squared:.4f} RMSE={m.rmse:.4f}")
    return EXIT_OK


def _pairs(cfg: RunConfig, name) -> pd.DataFrame:
    path = cfg.out("baseline_forecasts.csv") if name == "baseline" else cfg.out(f"eval_{name.value}.csv")
    if not path.exists():
        hint = "baseline" if name == "baseline" else f"evaluate --arch {name.value}"
        raise MissingArtifact(f"{path} missing; run `{hint}` first")
    return pd.read_csv(path)


def _tag(name) -> str:
    return "baseline" if name == "baseline" else name.value


def cmd_bootstrap(cfg: RunConfig, args) -> int:
    name = _arch(args.arch, allow_baseline=True)
    df = _pairs(cfg, name)
    rep = bootstrap_metrics(df["actual"].to_numpy(), df["predicted"].to_numpy(), cfg.protocol.B, cfg.seed)
    rep.to_csv(cfg.out(f"bootstrap_{_tag(name)}.csv"))
    table = rep.format_table(DISPLAY[name])
    cfg.out(f"bootstrap_{_tag(name)}.txt").write_text(table + "\n")
    print(table)
    print(f"block length {rep.block_length}, B={rep.B}")
    return EXIT_OK


def _write_metrics_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model"] + list(METRIC_NAMES) + ["n"])
        for label, m in rows:
            w.writerow([label] + [repr(float(v)) for v in m.as_row()] + [m.n])


def _read_bootstrap(path: Path) -> BootstrapReport:
    df = pd.read_csv(path)
    metrics = {
        r.metric: MetricSummary(r.mean, r.std, r.ci_low, r.ci_high, int(r.n_valid), int(r.n_undefined))
        for r in df.itertuples()
    }
    return BootstrapReport(metrics, int(df["B"].iloc[0]), int(df["block_length"].iloc[0]))


def cmd_report(cfg: RunConfig, args) -> int:
    names = ["baseline"] + ARCH_ORDER
    panel_a = []
    bias_rows = []
    for name in names:
        try:
            df = _pairs(cfg, name)
        except MissingArtifact:
            continue
        m = compute_metrics(df["actual"], df["predicted"])
        panel_a.append((DISPLAY[name], m))
        try:
            bias_rows.append((DISPLAY[name], bias_test(df["actual"], df["predicted"])))
        except ZeroVarianceErrors:
            pass
    if not panel_a:
        raise MissingArtifact("no forecast artifacts found; run `baseline` and/or `evaluate` first")
    _write_metrics_csv(cfg.out("panel_a.csv"), panel_a)

    lines = ["Panel A: Test-set performance", f"{'Model':<12}" + "".join(f"{METRIC_LABELS[k]:>12}" for k in METRIC_NAMES) + f"{'n':>6}"]
    for label, m in panel_a:
        lines.append(f"{label:<12}" + "".join(f"{v:>12.4f}" for v in m.as_row()) + f"{m.n:>6}")

    panel_b = []
    for name in names:
        path = cfg.out(f"bootstrap_{_tag(name)}.csv")
        if path.exists():
            panel_b.append((DISPLAY[name], _read_bootstrap(path)))
    if panel_b:
        lines += ["", f"Panel B: Bootstrap performance (mean +/- std, 95% CI [2.5th, 97.5th], B = {panel_b[0][1].B})"]
        lines.append(f"{'Model':<12}" + "".join(f"{METRIC_LABELS[k]:>22}" for k in METRIC_NAMES))
        with cfg.out("panel_b.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "metric", "mean", "std", "ci_low", "ci_high", "B", "block_length"])
            for label, rep in panel_b:
                for k, s in rep.rows():
                    w.writerow([label, k, repr(s.mean), repr(s.std), repr(s.ci_low), repr(s.ci_high), rep.B, rep.block_length])
                lines += rep.format_table(label).splitlines()[1:]
    if bias_rows:
        lines += ["", "Forecast bias (two-sided t-test on actual - predicted)", f"{'Model':<12}{'mean err':>12}{'t':>10}{'p':>10}"]
        for label, b in bias_rows:
            lines.append(f"{label:<12}{b.mean_error:>12.4f}{b.t_statistic:>10.3f}{b.p_value:>10.3f}")
    text = "\n".join(lines) + "\n"
    cfg.out("report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_plotdata(cfg: RunConfig, args) -> int:
    frame = _frame(cfg)
    p = cfg.protocol
    dates = frame.index.strftime("%Y-%m-%d")
    ret = frame[RETURN]
    pd.DataFrame({"date": dates, "spot_return": ret.to_numpy(), "rolling_std_30": ret.rolling(30).std().to_numpy()}).to_csv(
        cfg.out("plot_rolling_std.csv"), index=False, float_format="%.17g"
    )
    r = ret.to_numpy()
    lags = min(p.acf_lags, len(r) - 1)
    rho = np.concatenate([[1.0], acf(r, lags)])
    band = 1.96 / np.sqrt(len(r))
    pd.DataFrame({"lag": np.arange(lags + 1), "acf": rho, "ci_low": -band, "ci_high": band}).to_csv(
        cfg.out("plot_acf.csv"), index=False, float_format="%.17g"
    )
    cols = [PRICE] + [c for c in frame.columns if c not in (PRICE, RETURN, "Gap Days", "AR1 Spot Price", "Spot Return lag-1")]
    frame[cols].corr().to_csv(cfg.out("plot_correlation.csv"), float_format="%.17g")
    written = ["plot_rolling_std.csv", "plot_acf.csv", "plot_correlation.csv"]
    for name in ["baseline"] + ARCH_ORDER:
        try:
            df = _pairs(cfg, name)
        except MissingArtifact:
            continue
        fname = f"plot_actual_vs_predicted_{_tag(name)}.csv"
        df[["date", "actual", "predicted"]].to_csv(cfg.out(fname), index=False, float_format="%.17g")
        written.append(fname)
    print("wrote " + ", ".join(written))
    return EXIT_OK


COMMANDS = {
    "prepare": cmd_prepare,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "bootstrap": cmd_bootstrap,
    "report": cmd_report,
    "plotdata": cmd_plotdata,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lnnforecast", description="Recurrent return forecasters with walk-forward evaluation.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--arch", help="LSTM, StrictCfC, LTC, HybridCfC, CTLTC (or baseline for bootstrap)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--jobs", type=int, help="worker processes for independent training runs")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.jobs is not None:
            cfg = replace(cfg, jobs=max(1, args.jobs))
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LnnForecastError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
