"""Experiment configuration and Monte-Carlo orchestration.

A run set is organised in blocks: all runs in a block share one
supersample (and, in uniform buffer mode, one final buffer draw) and differ
in membership bits and optimizer randomness. This gives the conditioning
structure the e-CMI estimate needs; every other estimate pools all runs.
"""
from __future__ import annotations

import copy
import itertools
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import bounds
from .cl_train import BufferPolicy, NonFiniteParams, OptimizerCfg, run_continual, run_memorizer
from .model import ModelSpec
from .numerics import RngStream
from .tasks import (TaskSequence, draw_buffer_index, draw_membership, flip_labels, gen_synthetic_sequence, load_idx,
                    split_classes)

CONFIG_VERSION = 1
WORKERS_ENV = "REPLAYBOUNDS_WORKERS"


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "seed": 0,
    "data": {
        "generator": "synthetic",
        "T": 5,
        "n": 50,
        "dim": 2,
        "class_sep": 6.0,
        "rotation_per_task": 0.6,
        "delta": 0.0,
        "classes_per_task": 2,
        "idx_images": None,
        "idx_labels": None,
    },
    "buffer": {"m": None, "k": 0, "l": 0, "mode": "uniform", "policy": "fixed"},
    "model": {"kind": "linear", "hidden_dim": 0, "activation": "relu", "surrogate_clip": 4.0},
    "optimizer": OptimizerCfg().to_dict(),
    "learner": "trained",
    "estimation": {
        "blocks": 64,
        "runs_per_block": 4,
        "mode": "pooled_by_group",
        "bootstrap": 64,
        "c2_points": 64,
        "gamma_grid": [float(g) for g in bounds.BoundSearchCfg().gamma_grid],
        "fast_var_constant": "scaled",
        "confidence": 2.0,
    },
    "output": {"dir": None},
}


def _key_line(text: str | None, key: str) -> str:
    if not text:
        return ""
    for i, line in enumerate(text.splitlines(), 1):
        if re.search(r'"%s"\s*:' % re.escape(key), line):
            return f" (line {i})"
    return ""


def _merge(default, given, path, text):
    if not isinstance(given, dict):
        raise ConfigError(f"{path or 'config'}: expected an object{_key_line(text, path.split('.')[-1])}")
    out = copy.deepcopy(default)
    for key, val in given.items():
        kp = f"{path}.{key}" if path else key
        if key not in default:
            raise ConfigError(f"{kp}: unknown key{_key_line(text, key)}")
        if isinstance(default[key], dict):
            out[key] = _merge(default[key], val, kp, text)
        else:
            out[key] = val
    return out


def load_config(source, text: str | None = None) -> dict:
    """Merge a config (path, JSON text or dict) over the defaults and validate it."""
    if isinstance(source, dict):
        raw = source
    else:
        p = Path(source)
        text = p.read_text(encoding="utf-8") if p.exists() else str(source)
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if raw.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"version: unsupported config version {raw.get('version')}{_key_line(text, 'version')}")
    cfg = _merge(DEFAULT_CONFIG, raw, "", text)
    return validate_config(cfg, text)


def split_buffer_size(m: int, T: int) -> tuple:
    """k = the largest divisor of m not exceeding T-1, l = m / k."""
    if m == 0:
        return 0, 0
    for k in range(min(T - 1, m), 0, -1):
        if m % k == 0:
            return k, m // k
    raise ConfigError(f"buffer.m={m} cannot be split with T={T}")


def validate_config(cfg: dict, text: str | None = None) -> dict:
    d, b, e = cfg["data"], cfg["buffer"], cfg["estimation"]
    T, n = int(d["T"]), int(d["n"])
    if T < 2 or n < 1:
        raise ConfigError(f"data.T / data.n: need T >= 2 and n >= 1, got T={T}, n={n}{_key_line(text, 'T')}")
    if b["m"] is not None:
        b["k"], b["l"] = split_buffer_size(int(b["m"]), T)
    k, l = int(b["k"]), int(b["l"])
    if k * l > (T - 1) * n or k > T - 1 or l > n:
        raise ConfigError(f"buffer: k*l={k * l} exceeds (T-1)*n={(T - 1) * n} or k > T-1 or l > n"
                          f"{_key_line(text, 'buffer')}")
    if (k == 0) != (l == 0):
        raise ConfigError(f"buffer: k and l must both be zero or both positive{_key_line(text, 'buffer')}")
    if b["mode"] not in ("uniform", "balanced") or b["policy"] not in ("fixed", "redraw"):
        raise ConfigError(f"buffer.mode / buffer.policy: invalid value{_key_line(text, 'mode')}")
    if d["generator"] == "idx":
        for key in ("idx_images", "idx_labels"):
            if not d[key] or not Path(d[key]).exists():
                raise ConfigError(f"data.{key}: file not found: {d[key]}{_key_line(text, key)}")
    elif d["generator"] != "synthetic":
        raise ConfigError(f"data.generator: unknown generator {d['generator']!r}{_key_line(text, 'generator')}")
    if cfg["learner"] not in ("trained", "nearest_neighbour"):
        raise ConfigError(f"learner: unknown learner {cfg['learner']!r}{_key_line(text, 'learner')}")
    if e["blocks"] < 1 or e["runs_per_block"] < 1 or e["blocks"] * e["runs_per_block"] < 2:
        raise ConfigError(f"estimation: need at least 2 runs{_key_line(text, 'blocks')}")
    try:
        optimizer_cfg(cfg)
        model_spec(cfg, d["dim"] if d["generator"] == "synthetic" else 1, 2)
        search_cfg(cfg)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def optimizer_cfg(cfg: dict) -> OptimizerCfg:
    return OptimizerCfg.from_dict(cfg["optimizer"])


def model_spec(cfg: dict, input_dim: int, classes: int) -> ModelSpec:
    m = cfg["model"]
    return ModelSpec(m["kind"], int(input_dim), int(classes), int(m["hidden_dim"]), m["activation"],
                     float(m["surrogate_clip"]))


def search_cfg(cfg: dict) -> bounds.BoundSearchCfg:
    e = cfg["estimation"]
    return bounds.BoundSearchCfg(c2_points=int(e["c2_points"]), gamma_grid=tuple(float(g) for g in e["gamma_grid"]),
                                 estimation_mode=e["mode"], confidence=float(e["confidence"]),
                                 bootstrap=int(e["bootstrap"]), fast_var_constant=e["fast_var_constant"])


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "output"}
    return bounds.config_hash(body)


def make_sequence(cfg: dict, block: int) -> TaskSequence:
    d = cfg["data"]
    root = RngStream(int(cfg["seed"]))
    if d["generator"] == "synthetic":
        seq = gen_synthetic_sequence(int(d["T"]), int(d["n"]), int(d["dim"]), float(d["class_sep"]),
                                     float(d["rotation_per_task"]), root.child("data", block))
    else:
        X, y = load_idx(d["idx_images"], d["idx_labels"])
        seq = split_classes(X, y, int(d["classes_per_task"]), int(d["T"]), int(d["n"]), root.child("data", block))
    if d["delta"] > 0:
        seq = flip_labels(seq, float(d["delta"]), root.child("flip", block))
    return seq


def _block_buffer(cfg: dict, seq: TaskSequence, block: int):
    b = cfg["buffer"]
    if b["k"] == 0 or b["mode"] != "uniform":
        return None
    return draw_buffer_index(seq.T - 1, int(b["k"]), int(b["l"]), seq.n,
                             RngStream(int(cfg["seed"])).child("buffer", block))


def _run_block(args):
    cfg, block = args
    seq = make_sequence(cfg, block)
    root = RngStream(int(cfg["seed"]))
    final = _block_buffer(cfg, seq, block)
    b = cfg["buffer"]
    policy = BufferPolicy(b["policy"], int(b["k"]), int(b["l"]), b["mode"], final)
    opt = optimizer_cfg(cfg)
    spec = model_spec(cfg, seq.dim, seq.num_classes)
    snapshot = {"hash": config_hash(cfg)}
    out = []
    for i in range(int(cfg["estimation"]["runs_per_block"])):
        S = draw_membership(seq.T, seq.n, root.child("S", block, i))
        rng = root.child("run", block, i)
        try:
            if cfg["learner"] == "nearest_neighbour":
                buf = final if final is not None else policy_final(seq, S, policy, rng)
                rec = run_memorizer(seq, S, buf, rng, block)
            else:
                rec = run_continual(seq, S, policy, opt, spec, rng, block=block, config=snapshot)
            out.append(rec.to_json())
        except NonFiniteParams as exc:
            out.append(json.dumps({"status": "failed", "block": block, "run": i, "reason": str(exc)}))
    return out


def policy_final(seq, S, policy, rng):
    from .cl_train import draw_final_buffer
    return draw_final_buffer(seq, S, policy, rng.child("buffer", "final"))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def execute_runs(cfg: dict, sink=None, workers: int | None = None) -> list:
    """Run every block; returns run-record JSON lines in (block, run) order.

    sink, when given, is called with each block's lines as soon as the
    block finishes (in order), so completed records survive a later crash.
    """
    workers = worker_count() if workers is None else workers
    jobs = [(cfg, b) for b in range(int(cfg["estimation"]["blocks"]))]
    lines = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for block_lines in pool.map(_run_block, jobs):
                lines.extend(block_lines)
                if sink:
                    sink(block_lines)
    else:
        for job in jobs:
            block_lines = _run_block(job)
            lines.extend(block_lines)
            if sink:
                sink(block_lines)
    return lines


def records_from_lines(lines):
    from .cl_train import RunRecord
    recs, failed = [], 0
    for line in lines:
        doc = json.loads(line)
        if doc.get("status") == "failed":
            failed += 1
            continue
        recs.append(RunRecord.from_json(line))
    return recs, failed


def report_for(cfg: dict, records, failed: int = 0) -> bounds.BoundReport:
    opt = optimizer_cfg(cfg)
    sgld = {"eta": opt.eta_at, "xi": opt.xi_at} if (opt.kind == "sgld" and opt.probe and opt.xi > 0) else None
    meta = {
        "config_hash": config_hash(cfg),
        "master_seed": int(cfg["seed"]),
        "buffer": {"k": cfg["buffer"]["k"], "l": cfg["buffer"]["l"], "mode": cfg["buffer"]["mode"],
                   "policy": cfg["buffer"]["policy"]},
        "learner": cfg["learner"],
        "training_loss": "clipped cross-entropy" if cfg["learner"] == "trained" else "none",
        "failed_runs": failed,
        "run_count_note": "many Monte-Carlo runs per cell instead of three seeds; plug-in MI needs them",
    }
    return bounds.report(records, search_cfg(cfg), seed=int(cfg["seed"]), sgld=sgld, metadata=meta)


def run_experiment(cfg: dict, workers: int | None = None):
    """(records, report) for a validated config, without writing files."""
    lines = execute_runs(cfg, workers=workers)
    records, failed = records_from_lines(lines)
    return records, report_for(cfg, records, failed)


def set_path(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"{dotted}: unknown axis")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"{dotted}: unknown axis")
    node[parts[-1]] = value


def sweep_cells(sweep: dict):
    """Cross product of 'axes'; entries of 'zip' vary together. Yields (axis values, config)."""
    axes = sweep.get("axes", {})
    zipped = sweep.get("zip", {})
    if not axes and not zipped:
        raise ConfigError("sweep grid is empty")
    names = list(axes)
    zip_names = list(zipped)
    zip_len = len(next(iter(zipped.values()))) if zipped else 1
    if any(len(v) != zip_len for v in zipped.values()):
        raise ConfigError("zip axes must have equal lengths")
    for combo in itertools.product(*[axes[a] for a in names]):
        for zi in range(zip_len):
            cfg = copy.deepcopy(sweep.get("base", {}))
            values = dict(zip(names, combo))
            values.update({z: zipped[z][zi] for z in zip_names})
            for key, val in values.items():
                node = cfg
                parts = key.split(".")
                for p in parts[:-1]:
                    node = node.setdefault(p, {})
                node[parts[-1]] = val
            yield values, load_config(cfg)
