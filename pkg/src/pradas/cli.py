"""Command-line surface: CSV ingestion, config-driven runs, selection reports.

Configs are JSON (schema_version 1); tabular results are RFC-4180-style CSV
with a mandatory header row, UTF-8, '.' decimal separator, and all numbers
serialized with 17 significant digits so files round-trip bit-exactly.
Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seqstep
from .datamodel import (Dataset, ModelKind, SlabKind, SlabSpec, SpikeSlabPrior)
from .errors import (ConfigError, CsvParseError, EmptyAfterFilterError,
                     MissingResponseError, PradasError)
from .experiments import (GeneratorSpec, MethodSpec, RunOptions, Scenario, aggregate,
                          run_many, run_method, scenario_spec)

SCHEMA_VERSION = 1


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass(frozen=True)
class IngestReport:
    """What ingestion kept and why the rest was dropped."""

    n_rows: int
    n_features: int
    dropped_rows_missing: int
    dropped_columns: tuple[str, ...]
    log_transformed: bool


def _parse_cell(text: str, line: int, col_name: str) -> float:
    text = text.strip()
    if text == "" or text.upper() in ("NA", "NAN", "NULL"):
        return np.nan
    try:
        return float(text)
    except ValueError as exc:
        raise CsvParseError(f"line {line}, column {col_name!r}: not numeric: {text!r}") from exc


def ingest_csv(path: str | Path, response_column: str, log_transform: bool = False,
               min_feature_count: int = 3) -> tuple[Dataset, IngestReport]:
    """Read a feature table with a header row into a linear-model dataset.

    Rows with a missing response (or any missing feature value) are removed;
    binary feature columns with fewer than ``min_feature_count`` nonzero
    entries are dropped; the response is log-transformed when requested.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("empty file: a header row is mandatory") from None
        header = [h.strip() for h in header]
        if response_column not in header:
            raise MissingResponseError(
                f"response column {response_column!r} not found in header {header}")
        y_col = header.index(response_column)
        feat_cols = [i for i in range(len(header)) if i != y_col]
        rows = []
        dropped_missing = 0
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvParseError(
                    f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            vals = [_parse_cell(cell, line_no, header[i]) for i, cell in enumerate(row)]
            if any(np.isnan(v) for v in vals):
                dropped_missing += 1
                continue
            rows.append(vals)
    if not rows:
        raise EmptyAfterFilterError("no complete rows left after removing missing values")
    table = np.asarray(rows, dtype=float)
    y = table[:, y_col]
    X = table[:, feat_cols]
    names = [header[i] for i in feat_cols]

    keep, dropped_cols = [], []
    for j, name in enumerate(names):
        col = X[:, j]
        is_binary = np.isin(col, (0.0, 1.0)).all()
        if is_binary and int(np.count_nonzero(col)) < min_feature_count:
            dropped_cols.append(name)
        else:
            keep.append(j)
    if not keep:
        raise EmptyAfterFilterError("every feature column was dropped by the count filter")
    X = X[:, keep]
    names = [names[j] for j in keep]
    if log_transform:
        if np.any(y <= 0):
            raise CsvParseError("log transform requires strictly positive responses")
        y = np.log(y)
    data = Dataset(ModelKind.LINEAR, y, X, feature_names=tuple(names))
    report = IngestReport(n_rows=data.n, n_features=data.p,
                          dropped_rows_missing=dropped_missing,
                          dropped_columns=tuple(dropped_cols),
                          log_transformed=log_transform)
    return data, report


def export_csv(data: Dataset, response_column: str, path: str | Path):
    """Inverse of ingestion for linear datasets (17 significant digits)."""
    names = data.feature_names or tuple(f"x{j}" for j in range(data.p))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([response_column, *names])
        for i in range(data.n):
            writer.writerow([_fmt(data.response[i]), *(_fmt(v) for v in data.design[i])])


def _prior_from_config(cfg: dict) -> SpikeSlabPrior:
    try:
        slab = SlabSpec(SlabKind(cfg.get("slab", "gaussian")),
                        float(cfg.get("mu0", 0.0)), float(cfg.get("tau2", 1.0)))
        return SpikeSlabPrior(float(cfg["p0"]), slab)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid prior section: {exc}") from exc


def _methods_from_config(items) -> list[MethodSpec]:
    methods = []
    for item in items:
        if isinstance(item, str):
            item = {"name": item}
        try:
            methods.append(MethodSpec(name=item["name"], ratio=item.get("ratio"),
                                      ell=item.get("ell")))
        except (KeyError, TypeError, PradasError) as exc:
            raise ConfigError(f"invalid method entry {item!r}: {exc}") from exc
    if not methods:
        raise ConfigError("config lists no methods")
    return methods


def _load_config(path: str | Path) -> dict:
    try:
        with Path(path).open(encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg.get('schema_version')}")
    for key in ("methods", "q"):
        if key not in cfg:
            raise ConfigError(f"config is missing required key {key!r}")
    if "scenario" not in cfg and "data_file" not in cfg:
        raise ConfigError("config needs either 'scenario' or 'data_file'")
    return cfg


def _options_from_config(cfg: dict) -> RunOptions:
    sampler = cfg.get("sampler", {})
    adms_cfg = cfg.get("adms", {})
    kwargs = {}
    if "K" in sampler:
        kwargs["gibbs_draws"] = int(sampler["K"])
    if "burn_in" in sampler:
        kwargs["gibbs_burn"] = int(sampler["burn_in"])
    if "K_pred" in sampler:
        kwargs["k_pred"] = int(sampler["K_pred"])
    if "ratios" in adms_cfg:
        kwargs["ratios"] = tuple(float(r) for r in adms_cfg["ratios"])
    if "l1_penalty" in adms_cfg:
        kwargs["l1_penalty"] = float(adms_cfg["l1_penalty"])
    try:
        return RunOptions(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sampler/adms options: {exc}") from exc


_RESULT_COLUMNS = ("method", "rep", "fdp", "power", "tp", "fp", "n_selected",
                   "tau_q", "wall_ms")


def run_config(config_path: str | Path, output_dir: str | Path | None = None,
               seed_override: int | None = None, record_timings: bool = True) -> Path:
    """Run the experiment a config describes; returns the output directory.

    Writes ``results.csv`` (one row per method and replication) and
    ``summary.json``.  With ``record_timings=False`` the wall-time column is
    written as 0, making reruns with the same seed byte-identical; measured
    timings are otherwise inherently nondeterministic.
    """
    cfg = _load_config(config_path)
    out_dir = Path(output_dir if output_dir is not None else cfg.get("output_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)

    methods = _methods_from_config(cfg["methods"])
    q = float(cfg["q"])
    seed = int(seed_override if seed_override is not None else cfg.get("seed", 0))
    reps = int(cfg.get("replications", 1))
    options = _options_from_config(cfg)

    if "data_file" in cfg:
        raise ConfigError("data_file runs use the 'select' subcommand; configs take a scenario")
    try:
        scenario = Scenario(cfg["scenario"])
    except ValueError as exc:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}") from exc
    overrides = {k: cfg[k] for k in ("n", "p", "d", "rho") if k in cfg}
    try:
        spec = scenario_spec(scenario, **overrides)
    except PradasError as exc:
        raise ConfigError(str(exc)) from exc
    if "prior" in cfg:
        spec = GeneratorSpec(**{**spec.__dict__, "working_prior": _prior_from_config(cfg["prior"])})

    results = run_many(spec, methods, q, reps, seed, options)

    rows = sorted(results, key=lambda r: (r.method, r.rep))
    with (out_dir / "results.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_RESULT_COLUMNS)
        for r in rows:
            writer.writerow([
                r.method, r.rep, _fmt(r.metrics.fdp), _fmt(r.metrics.power),
                r.metrics.tp, r.metrics.fp, r.metrics.tp + r.metrics.fp,
                _fmt(r.tau_q), _fmt(r.wall_ms if record_timings else 0.0),
            ])

    summary = {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg["scenario"],
        "q": _fmt(q),
        "seed": seed,
        "replications": reps,
        "methods": [
            {k: (_fmt(v) if isinstance(v, float) else v) for k, v in row.items()}
            for row in aggregate(results)
        ],
    }
    with (out_dir / "summary.json").open("w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out_dir


def select_command(data_file: str | Path, response_column: str, method: MethodSpec,
                   prior: SpikeSlabPrior, q: float, output_dir: str | Path,
                   log_transform: bool = False, min_feature_count: int = 3,
                   seed: int = 0, options: RunOptions = RunOptions(),
                   stream: io.TextIOBase | None = None) -> Path:
    """Ingest a CSV, run one mirror selection, and write a report.

    Produces ``selection.csv`` (feature, mirror value, selected flag) and
    ``selection.json`` (cutoff, estimated-FDP trace, selected names).
    """
    stream = stream if stream is not None else sys.stdout
    data, report = ingest_csv(data_file, response_column, log_transform, min_feature_count)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    from .experiments import _fixed_split_mirror  # shared pipeline internals

    if method.name in ("BH", "Lfdr", "ADMSThr", "ADMSSnell"):
        raise ConfigError("the select command supports the fixed-split methods SignSum and OMS")
    mv = _fixed_split_mirror(data, prior, method, seed, options)
    sel = seqstep.select(mv, q)

    names = data.feature_names or tuple(f"x{j}" for j in range(data.p))
    selected_mask = np.zeros(data.p, dtype=bool)
    selected_mask[sel.selected] = True
    with (out_dir / "selection.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["feature", "mirror", "selected"])
        for j, name in enumerate(names):
            writer.writerow([name, _fmt(mv.values[j]), int(selected_mask[j])])
    payload = {
        "method": method.label,
        "q": _fmt(q),
        "tau_q": _fmt(sel.tau_q),
        "n_selected": sel.n_selected,
        "selected": [names[j] for j in sel.selected],
        "fdp_hat_trace": [[_fmt(t), _fmt(f)] for t, f in sel.fdp_hat_trace],
        "ingest": {
            "rows": report.n_rows, "features": report.n_features,
            "dropped_rows_missing": report.dropped_rows_missing,
            "dropped_columns": list(report.dropped_columns),
        },
    }
    with (out_dir / "selection.json").open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if sel.n_selected == 0:
        print(f"no discoveries at level q={q:g}", file=stream)
    else:
        print(f"selected {sel.n_selected} features at level q={q:g} "
              f"(cutoff {sel.tau_q:.6g})", file=stream)
    return out_dir


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pradas",
                                     description="FDR-controlled feature selection via "
                                                 "data-splitting mirror statistics")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a JSON experiment config")
    run_p.add_argument("config", help="path to the JSON config")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--output-dir", default=None)
    run_p.add_argument("--no-timings", action="store_true",
                       help="write wall_ms as 0 for byte-reproducible outputs")

    sel_p = sub.add_parser("select", help="select features from a CSV dataset")
    sel_p.add_argument("--data", required=True)
    sel_p.add_argument("--response", required=True)
    sel_p.add_argument("--method", default="OMS", choices=["SignSum", "OMS"])
    sel_p.add_argument("--ratio", type=float, default=0.5)
    sel_p.add_argument("--q", type=float, default=0.1)
    sel_p.add_argument("--p0", type=float, required=True, help="prior spike probability")
    sel_p.add_argument("--slab", default="gaussian",
                       choices=[k.value for k in SlabKind])
    sel_p.add_argument("--mu0", type=float, default=0.0)
    sel_p.add_argument("--tau2", type=float, default=1.0)
    sel_p.add_argument("--log-transform", action="store_true")
    sel_p.add_argument("--min-feature-count", type=int, default=3)
    sel_p.add_argument("--seed", type=int, default=0)
    sel_p.add_argument("--output-dir", default=".")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            out = run_config(args.config, output_dir=args.output_dir,
                             seed_override=args.seed, record_timings=not args.no_timings)
            print(f"results written to {out}")
            return 0
        prior = SpikeSlabPrior(args.p0, SlabSpec(SlabKind(args.slab), args.mu0,
                                                 0.0 if args.slab == "point_mass" else args.tau2))
        method = MethodSpec(args.method, ratio=args.ratio)
        select_command(args.data, args.response, method, prior, args.q,
                       args.output_dir, args.log_transform, args.min_feature_count,
                       args.seed)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (PradasError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
