"""Command-line entry point: run, sweep and validate.

Exit codes: 0 success, 1 a check or run failed, 2 bad configuration or usage.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment, validation
from .experiment import ConfigError

log = logging.getLogger("replaybounds")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _out_dir(arg, cfg) -> Path:
    if arg:
        return Path(arg)
    if cfg["output"]["dir"]:
        return Path(cfg["output"]["dir"])
    return Path("results") / experiment.config_hash(cfg)


def write_bounds_csv(path: Path, rows, axis_names=()) -> None:
    header = ["config_hash", *axis_names, "bound", "value", "se", "gap", "gap_se", "empirical_risk",
              "population_risk"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def cmd_run(args) -> int:
    cfg = experiment.load_config(args.config)
    out = _out_dir(args.out, cfg)
    out.mkdir(parents=True, exist_ok=True)
    h = experiment.config_hash(cfg)
    (out / "config.json").write_text(_dump(cfg), encoding="utf-8")
    runs_path = out / "runs.jsonl"
    runs_path.write_text("", encoding="utf-8")

    def sink(lines):
        with runs_path.open("a", encoding="utf-8") as f:
            for line in lines:
                f.write(line + "\n")

    lines = experiment.execute_runs(cfg, sink=sink)
    records, failed = experiment.records_from_lines(lines)
    if len(records) < 2:
        log.error("only %d runs finished; nothing to estimate", len(records))
        return EXIT_FAIL
    rep = experiment.report_for(cfg, records, failed)
    (out / "report.json").write_text(_dump(rep.to_dict()), encoding="utf-8")
    write_bounds_csv(out / "bounds.csv", rep.csv_rows(h))
    print(f"config {h}: gap {rep.gap:.6f} +/- {rep.gap_se:.6f}")
    for e in rep.entries:
        print(f"  {e['name']:<14} {e['value']:.6f} +/- {e['se']:.6f}")
    if failed:
        log.error("%d runs stopped on non-finite parameters", failed)
        return EXIT_FAIL
    return EXIT_OK


def _load_sweep(path) -> dict:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    try:
        sweep = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    allowed = {"version", "base", "axes", "zip", "output"}
    for key in sweep:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown key{experiment._key_line(text, key)}")
    if sweep.get("version", experiment.CONFIG_VERSION) != experiment.CONFIG_VERSION:
        raise ConfigError("version: unsupported sweep version")
    return sweep


def cmd_sweep(args) -> int:
    sweep = _load_sweep(args.sweep)
    cells = list(experiment.sweep_cells(sweep))
    out = Path(args.out or sweep.get("output", {}).get("dir") or "results/sweep")
    (out / "cells").mkdir(parents=True, exist_ok=True)
    axis_names = sorted(cells[0][0])
    rows, failed_total = [], 0
    for values, cfg in cells:
        h = experiment.config_hash(cfg)
        records, rep = experiment.run_experiment(cfg)
        failed_total += rep.metadata.get("failed_runs", 0)
        rep.metadata["axes"] = values
        (out / "cells" / f"{h}.json").write_text(_dump(rep.to_dict()), encoding="utf-8")
        for row in rep.csv_rows(h):
            rows.append((row[0], *[values[a] for a in axis_names], *row[1:]))
        print(f"{h} {values}: gap {rep.gap:.6f}")
    write_bounds_csv(out / "sweep.csv", rows, axis_names)
    return EXIT_FAIL if failed_total else EXIT_OK


def cmd_validate(args) -> int:
    sections = [args.section] if args.section else list(validation.SECTIONS)
    timings = {}
    rep = validation.run_validation(sections, timings)
    for sec, body in rep["sections"].items():
        for c in body["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"{status} {sec}/{c['name']}: measured {c['measured']:.3e} tolerance {c['tolerance']:.3e}")
        print(f"section {sec}: {timings[sec]:.1f} s")
    if args.out:
        Path(args.out).write_text(_dump(rep), encoding="utf-8")
    print("validation " + ("passed" if rep["passed"] else "FAILED"))
    return EXIT_OK if rep["passed"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="replaybounds",
                                description="Generalization bounds for replay-based continual learning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one configuration and write its bound report")
    r.add_argument("config")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="run a grid of configurations and write a long-form CSV")
    s.add_argument("sweep")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_sweep)
    v = sub.add_parser("validate", help="run the numerical and exact-oracle self-checks")
    v.add_argument("--section", choices=validation.SECTIONS)
    v.add_argument("--out", help="write the full report as JSON")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
