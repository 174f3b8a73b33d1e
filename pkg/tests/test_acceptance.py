"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

The expensive sweeps run once per module and are shared between criteria.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from replaybounds import bounds, cli, experiment, suites, validation
from replaybounds.numerics import RngStream

FAST_BOUNDS = ("fast_loss", "fast_loss_l1", "fast_var")
FAST_MINIMAL_SHARE = 0.8


def _run_sweep(name):
    out = []
    for values, cfg in experiment.sweep_cells(suites.get(name)):
        records, rep = experiment.run_experiment(cfg)
        out.append((values, records, rep))
    return out


def _combined(*ses):
    return math.sqrt(sum(s * s for s in ses))


def _failed(checks):
    return [c["name"] for c in checks if not c["passed"]]


def _summary(checks):
    return ", ".join(f"{c['name']} {c['measured']:.3g}/{c['tolerance']:.3g}" for c in checks)


@pytest.fixture(scope="module")
def default_sweep():
    return _run_sweep("default_sweep")


@pytest.fixture(scope="module")
def separable_sweep():
    return _run_sweep("separable_sweep")


@pytest.fixture(scope="module")
def sgld_sweep():
    return _run_sweep("sgld_sweep")


@pytest.fixture(scope="module")
def label_noise_sweep():
    return _run_sweep("label_noise_sweep")


def test_criterion_1_numeric_identities(acceptance):
    t0 = time.perf_counter()
    checks = validation.check_numerics() + validation.check_gradients(cases=100)
    seconds = time.perf_counter() - t0
    ok = not _failed(checks) and seconds <= 60
    acceptance(1, "numeric identities", ok, f"{_summary(checks)}; {seconds:.1f} s (limit 60 s)")
    assert ok, _failed(checks)


def test_criterion_2_oracle_exactness(acceptance):
    t0 = time.perf_counter()
    checks = validation.check_oracle(specs=100)
    seconds = time.perf_counter() - t0
    bad = _failed(checks)
    parts = []
    for c in checks:
        if c["name"].startswith("oracle_"):
            parts.append(f"{c['name']} failing {int(c['measured'])}/100 min slack {c['detail']['min_slack']:.3g}")
    ok = not bad and seconds <= 300
    acceptance(2, "exact oracle inequalities on 100 random toy problems", ok,
               f"{'; '.join(parts)}; route agreement {'ok' if not any('route' in b for b in bad) else 'FAILED'};"
               f" {seconds:.1f} s (limit 300 s)")
    assert ok, bad


def test_criterion_3_estimator_consistency(acceptance):
    checks = validation.check_estimators()
    med = checks[0]["detail"]["median_error"]
    ok = not _failed(checks)
    acceptance(3, "plug-in MI consistency", ok,
               f"median error at 1e5 samples {med[-1]:.2e} (limit 0.01), ladder "
               + " ".join(f"{e:.1e}" for e in med))
    assert ok, _failed(checks)


def test_criterion_4_interpolating_identity(acceptance, separable_sweep):
    parts, ok = [], True
    for values, records, rep in separable_sweep:
        res = bounds.check_interpolating_identity(records, experiment.search_cfg(
            experiment.load_config(suites.separable_base())), z=3.0)
        cell_ok = len(records) >= 200 and res["applicable"] and res["satisfied"]
        ok = ok and cell_ok
        if res["applicable"]:
            parts.append(f"m={values['buffer.m']} runs {len(records)} risk {res['lhs']:.4f} vs delta form "
                         f"{res['rhs_delta']:.4f} (3 se {3 * res['combined_se_delta']:.4f}) pair form "
                         f"{res['rhs_pair']:.4f} (3 se {3 * res['combined_se_pair']:.4f})")
        else:
            parts.append(f"m={values['buffer.m']} not interpolating")
    mem = validation.check_interpolating()
    ok = ok and not _failed(mem)
    d = mem[0]["detail"]
    parts.append(f"memorizer test error {d['population_risk']:.4f} vs MI/log2 {d['rhs']:.4f} "
                 f"(3 se {mem[0]['tolerance']:.4f})")
    acceptance(4, "interpolating identity", ok, "; ".join(parts))
    assert ok


def test_criterion_5_bound_validity(acceptance, default_sweep):
    violations, interp, fast_min = [], 0, 0
    for values, _, rep in default_sweep:
        for e in rep.entries:
            slack = e["value"] - (rep.gap - 2 * _combined(e["se"], rep.gap_se))
            if slack < 0:
                violations.append(f"{e['name']}@{values}")
        if rep.empirical_risk <= suites.INTERPOLATING_RISK:
            interp += 1
            best = min(rep.entries, key=lambda e: e["value"])["name"]
            fast_min += best in FAST_BOUNDS
    share = fast_min / interp if interp else 0.0
    ok = not violations and interp > 0 and share >= FAST_MINIMAL_SHARE
    acceptance(5, "bound validity on the default sweep", ok,
               f"{len(default_sweep)} cells, violations {violations or 'none'}; fast bounds minimal in "
               f"{fast_min}/{interp} interpolating cells (empirical risk <= {suites.INTERPOLATING_RISK}), "
               f"need >= {FAST_MINIMAL_SHARE:.0%}")
    assert ok


def test_criterion_6_trend_in_n_and_buffer(acceptance, default_sweep, separable_sweep):
    by_m = {}
    for values, _, rep in default_sweep:
        by_m.setdefault(values["buffer.m"], []).append((values["data.n"], rep))
    increases = []
    for m, cells in sorted(by_m.items()):
        cells.sort(key=lambda c: c[0])
        for (n0, a), (n1, b) in zip(cells, cells[1:]):
            pairs = [("gap", a.gap, a.gap_se, b.gap, b.gap_se)]
            pairs += [(e["name"], e["value"], e["se"], b.value(e["name"]), b.entry(e["name"])["se"])
                      for e in a.entries]
            for name, v0, s0, v1, s1 in pairs:
                if v1 - v0 > _combined(s0, s1):
                    increases.append(f"{name} m={m} n {n0}->{n1}")
    small = min(separable_sweep, key=lambda c: c[0]["buffer.m"])
    large = max(separable_sweep, key=lambda c: c[0]["buffer.m"])
    diff = abs(small[2].gap - large[2].gap)
    tol = 2 * _combined(small[2].gap_se, large[2].gap_se)
    ok = not increases and diff <= tol
    acceptance(6, "non-increasing in n, small buffer comparable", ok,
               f"increases beyond 1 se: {increases or 'none'}; separable gap m={small[0]['buffer.m']} "
               f"{small[2].gap:.4f} vs m={large[0]['buffer.m']} {large[2].gap:.4f}, |diff| {diff:.4f} "
               f"(2 se {tol:.4f})")
    assert ok


def _probe_fixtures(sgld_sweep):
    """Real probe logs from the sweep plus random nonzero ones."""
    fixtures = [[r.probe_log for r in records] for _, records, _ in sgld_sweep]
    g = RngStream(3, ("acceptance", "probes")).generator()
    for _ in range(20):
        R, m, d = int(g.integers(1, 6)), int(g.integers(2, 8)), int(g.integers(1, 10))
        logs = []
        for _ in range(int(g.integers(1, 4))):
            steps = [g.normal(size=(m, d)) for _ in range(R)]
            logs.append([s - s.mean(0) for s in steps])
        fixtures.append(logs)
    return fixtures


def test_criterion_7_sgld_trend(acceptance, sgld_sweep):
    xis = np.geomspace(1e-3, 1e-1, 9)
    etas = np.geomspace(1e-3, 1e-1, 9)
    worst_xi, worst_eta = -math.inf, math.inf
    for logs in _probe_fixtures(sgld_sweep):
        by_xi = [bounds.bound_sgld(logs, lambda r: 0.01, lambda r, x=x: x, 4, 4, 50) for x in xis]
        by_eta = [bounds.bound_sgld(logs, lambda r, e=e: e, lambda r: 0.01, 4, 4, 50) for e in etas]
        worst_xi = max(worst_xi, float(np.max(np.diff(by_xi))))
        worst_eta = min(worst_eta, float(np.min(np.diff(by_eta))))
    values = [rep.value("sgld") for _, _, rep in sgld_sweep]
    ordered = all(a > b for a, b in zip(values, values[1:]))
    ok = worst_xi < 0 and worst_eta > 0 and ordered
    settings = ", ".join(f"(eta {v['optimizer.eta']}, xi {v['optimizer.xi']:.3g}) {rep.value('sgld'):.4f}"
                         for v, _, rep in sgld_sweep)
    acceptance(7, "SGLD trajectory bound monotone in eta and xi", ok,
               f"largest step in xi {worst_xi:.3g} (need < 0), smallest step in eta {worst_eta:.3g} (need > 0); "
               f"end-to-end {settings}, decreasing: {ordered}")
    assert ok


def test_criterion_8_label_noise(acceptance, label_noise_sweep):
    cells = sorted(label_noise_sweep, key=lambda c: c[0]["data.delta"])
    drops = []
    for (_, _, a), (_, _, b) in zip(cells, cells[1:]):
        if b.gap < a.gap - _combined(a.gap_se, b.gap_se):
            drops.append((a.gap, b.gap))
    bad = [f"{e['name']}@{v['data.delta']}" for v, _, rep in cells for e in rep.entries
           if not rep.gap <= e["value"] < 1]
    ok = not drops and not bad
    gaps = ", ".join(f"delta {v['data.delta']}: {rep.gap:.4f} +/- {rep.gap_se:.4f}" for v, _, rep in cells)
    top = max(e["value"] for _, _, rep in cells for e in rep.entries)
    acceptance(8, "label noise raises the gap, bounds stay valid and below 1", ok,
               f"{gaps}; decreases beyond 1 se {drops or 'none'}; bounds outside [gap, 1): {bad or 'none'};"
               f" largest bound {top:.4f}")
    assert ok


def _artifacts(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(acceptance, tmp_path, monkeypatch):
    import json
    cfg = tmp_path / "smoke.json"
    cfg.write_text(json.dumps(suites.get("smoke")))
    sweep = suites.get("smoke")
    sweep = {"version": 1, "base": {k: v for k, v in sweep.items() if k != "version"},
             "axes": {"buffer.m": [2, 4]}}
    sweep_path = tmp_path / "sweep.json"
    sweep_path.write_text(json.dumps(sweep))
    outputs = []
    for rep, workers in enumerate(("1", "1", "2")):
        monkeypatch.setenv(experiment.WORKERS_ENV, workers)
        root = tmp_path / f"rep{rep}"
        codes = (cli.main(["run", str(cfg), "--out", str(root / "run")]),
                 cli.main(["sweep", str(sweep_path), "--out", str(root / "sweep")]),
                 cli.main(["validate", "--section", "numerics", "--out", str(root / "validate.json")]))
        outputs.append((codes, _artifacts(root)))
    same = all(o == outputs[0] for o in outputs[1:])
    files = len(outputs[0][1])
    ok = same and outputs[0][0] == (0, 0, 0)
    acceptance(9, "determinism", ok, f"{files} artifact files from run, sweep and validate byte-identical across "
               f"2 serial reruns and a 2-worker rerun: {same}; exit codes {outputs[0][0]}")
    assert ok
