"""Self-checks behind the `validate` command.

Every check compares a package routine against an independent route
(closed form, dense linear algebra, finite differences, exhaustive
enumeration) and reports the measured discrepancy next to its tolerance.
"""
from __future__ import annotations

import math
import time

import numpy as np

from . import bounds, numerics, oracle
from .model import ModelSpec, fd_gradient_check, init_params, kink_margin
from .numerics import RngStream
from .tasks import BufferIndex, draw_buffer_index, draw_membership, flip_labels, gen_synthetic_sequence

SECTIONS = ("numerics", "gradients", "oracle", "estimators", "interpolating")

TOL_KL_ROUNDTRIP = 1e-9
TOL_BINARY_KL = 1e-12
TOL_PLUGIN_MI = 1e-12
TOL_LOGDET_REL = 1e-8
TOL_GRADCHECK = 1e-4
KINK_MARGIN = 1e-2  # 100 finite-difference steps
TOL_ORACLE = 1e-10
TOL_ROUTE = 1e-9
TOL_ROUTE_KL = 1e-6  # binary-KL inversion on near-zero budgets is limited by rounding in d(p||q)
TOL_PLUGIN_ERROR = 0.01


def _check(name, measured, tolerance, passed, **detail):
    return {"name": name, "measured": float(measured), "tolerance": float(tolerance), "passed": bool(passed),
            "detail": detail}


# ------------------------------------------------------------------ numerics

def _kl_closed_form(p, q):
    out = 0.0
    if p > 0:
        out += p * (math.log(p) - math.log(q))
    if p < 1:
        out += (1 - p) * (math.log(1 - p) - math.log(1 - q))
    return out


def _mi_loops(counts):
    """Mutual information of a count table by explicit summation."""
    N = float(sum(sum(r) for r in counts))
    rows = [sum(r) / N for r in counts]
    cols = [sum(counts[i][j] for i in range(len(counts))) / N for j in range(len(counts[0]))]
    total = 0.0
    for i, r in enumerate(counts):
        for j, c in enumerate(r):
            if c > 0:
                pij = c / N
                total += pij * math.log(pij / (rows[i] * cols[j]))
    return total


def check_numerics(seed: int = 0) -> list:
    out = []
    grid = np.linspace(0.0, 0.95, 20)
    worst_rt, worst_kl = 0.0, 0.0
    for p in grid:
        for L in np.linspace(p + 0.02, 1.0, 15)[:-1]:
            budget = numerics.binary_kl(p, 0.5 * (p + L))
            back = numerics.invert_binary_kl(p, budget)
            worst_rt = max(worst_rt, abs(back - L))
        for q in np.linspace(0.01, 0.99, 25):
            worst_kl = max(worst_kl, abs(numerics.binary_kl(p, q) - _kl_closed_form(p, q)))
    out.append(_check("binary_kl_closed_form", worst_kl, TOL_BINARY_KL, worst_kl <= TOL_BINARY_KL))
    out.append(_check("binary_kl_inversion_roundtrip", worst_rt, TOL_KL_ROUNDTRIP, worst_rt <= TOL_KL_ROUNDTRIP))

    g = RngStream(seed, ("validate", "plugin")).generator()
    worst = 0.0
    for _ in range(200):
        V = int(g.integers(1, 6))
        counts = g.integers(0, 50, size=(V, 2))
        counts[0, 0] += 1
        est = numerics.plugin_mi(numerics.JointHistogram(tuple(range(V)), counts))
        worst = max(worst, abs(est - _mi_loops(counts.tolist())))
    out.append(_check("plugin_mi_direct_sum", worst, TOL_PLUGIN_MI, worst <= TOL_PLUGIN_MI))

    worst = 0.0
    for _ in range(100):
        m, d = int(g.integers(1, 12)), int(g.integers(1, 12))
        A = g.normal(size=(m, d))
        scale = float(np.exp(g.uniform(-4, 2)))
        got = numerics.logdet_cov_gram(A, scale)
        ref = np.linalg.slogdet(np.eye(d) + scale * A.T @ A)[1]
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
    out.append(_check("logdet_gram_vs_dense", worst, TOL_LOGDET_REL, worst <= TOL_LOGDET_REL))
    return out


# ------------------------------------------------------------------ gradients

GRADCHECK_KINDS = (("linear", "relu"), ("mlp", "relu"), ("mlp", "tanh"))


def check_gradients(seed: int = 0, cases: int = 100) -> list:
    out = []
    for kind, act in GRADCHECK_KINDS:
        worst = 0.0
        for i in range(cases):
            g = RngStream(seed, ("validate", "grad", kind, act, i)).generator()
            D, C = int(g.integers(1, 6)), int(g.integers(2, 5))
            spec = ModelSpec(kind, D, C, int(g.integers(1, 8)) if kind == "mlp" else 0, act)
            params = init_params(spec, RngStream(seed, ("validate", "grad_init", kind, act, i)))
            # finite differences are meaningless across a kink, so redraw inputs that sit near one
            while True:
                X = g.normal(size=(int(g.integers(1, 12)), D))
                y = g.integers(0, C, size=len(X))
                if kink_margin(params, X, y) > KINK_MARGIN:
                    break
            worst = max(worst, fd_gradient_check(params, X, y))
        out.append(_check(f"gradcheck_{kind}_{act}", worst, TOL_GRADCHECK, worst <= TOL_GRADCHECK, cases=cases))
    return out


# ------------------------------------------------------------------ oracle

def oracle_suite(seed: int = 7, specs: int = 100) -> dict:
    """Exact quantities on random toy problems with k = l = 1 against k = l = 2."""
    fails = {"cmi_le_mi": [], "buffer_monotone_sqrt": [], "buffer_monotone_identity": [], "kl_ge_gap": [], "fast_ge_gap": []}
    margins = {k: math.inf for k in fails}
    for i in range(specs):
        toy = oracle.random_toyspec(RngStream(seed, ("toy", i)))
        r = oracle.exact_quantities(toy, 1, 1)
        p1 = oracle.check_buffer_monotonicity(toy, 1, 1)
        pairs = {
            "cmi_le_mi": r.hyp_mi - r.hyp_cmi,
            "buffer_monotone_sqrt": p1["sqrt"]["rhs"] - p1["sqrt"]["lhs"],
            "buffer_monotone_identity": p1["identity"]["rhs"] - p1["identity"]["lhs"],
            "kl_ge_gap": r.hyp_kl - r.gap,
            "fast_ge_gap": r.hyp_fast - r.gap,
        }
        for key, slack in pairs.items():
            margins[key] = min(margins[key], slack)
            if slack < -TOL_ORACLE:
                fails[key].append(i)
    return {"specs": specs, "failures": fails, "min_slack": margins}


def route_agreement(seed: int = 5, specs: int = 8) -> dict:
    """Largest difference between exhaustive enumeration and the factorized computation."""
    worst = {"hyp_mi": 0.0, "hyp_cmi": 0.0, "cmi_sum": 0.0, "gap": 0.0, "hyp_kl": 0.0, "hyp_fast": 0.0}
    done = 0
    i = 0
    while done < specs:
        toy = oracle.random_toyspec(RngStream(seed, ("route", i)), T=2, max_n=2, max_alphabet=2,
                                    max_hypotheses=4)
        i += 1
        k, l = 1, 1
        if oracle.atom_count(toy, k, l) > 2 * 10 ** 6:
            continue
        brute = oracle._brute_quantities(oracle.enumerate_joint(toy, k, l))
        fact = oracle.exact_quantities(toy, k, l)
        for key in worst:
            worst[key] = max(worst[key], abs(brute[key] - getattr(fact, key)))
        done += 1
    return worst


def check_oracle(seed: int = 7, specs: int = 100) -> list:
    out = []
    suite = oracle_suite(seed, specs)
    for key, idx in suite["failures"].items():
        out.append(_check(f"oracle_{key}", len(idx), 0, not idx, specs=specs, failing_specs=idx,
                          min_slack=suite["min_slack"][key], slack_tolerance=TOL_ORACLE))
    worst = route_agreement()
    for key, err in worst.items():
        tol = TOL_ROUTE_KL if key == "hyp_kl" else TOL_ROUTE
        out.append(_check(f"route_agreement_{key}", err, tol, err <= tol))
    return out


# ------------------------------------------------------------------ estimators

PLUGIN_LADDER = tuple(1000 * 2 ** j for j in range(7)) + (100000,)


def estimator_fixture(seed: int = 11):
    """A binary-loss toy problem whose cell terms carry clearly nonzero information."""
    for i in range(200):
        toy = oracle.random_toyspec(RngStream(seed, ("toy", i)), binary=True)
        r = oracle.exact_quantities(toy, 1, 1)
        if r.cmi_sum > 0.05:
            return toy, r
    raise RuntimeError("no informative fixture found")


def plugin_convergence(seeds: int = 20, ladder=PLUGIN_LADDER) -> dict:
    _, r = estimator_fixture()
    runs = [oracle.oracle_validate_estimators(r, ladder, s)["mean_error"] for s in range(seeds)]
    med = np.median(np.array(runs), axis=0)
    return {"ladder": list(ladder), "median_error": med.tolist(),
            "monotone": bool(np.all(np.diff(med) <= 0)), "final": float(med[-1])}


def check_estimators() -> list:
    res = plugin_convergence()
    return [
        _check("plugin_error_at_1e5", res["final"], TOL_PLUGIN_ERROR, res["final"] <= TOL_PLUGIN_ERROR,
               ladder=res["ladder"], median_error=res["median_error"]),
        _check("plugin_error_monotone", float(np.max(np.diff(res["median_error"]))), 0.0, res["monotone"]),
    ]


# ------------------------------------------------------------------ interpolating fixture

def memorizer_runs(blocks: int = 16, per_block: int = 16, T: int = 3, n: int = 20, k: int = 2, l: int = 5,
                   delta: float = 0.5, seed: int = 0) -> list:
    """Runs of the 1-nearest-neighbour learner on label-flipped synthetic data."""
    from .cl_train import run_memorizer
    root = RngStream(seed, ("memorizer",))
    runs = []
    for b in range(blocks):
        seq = gen_synthetic_sequence(T, n, 4, 2.0, 0.3, root.child("data", b))
        if delta > 0:
            seq = flip_labels(seq, delta, root.child("flip", b))
        buf = draw_buffer_index(T - 1, k, l, n, root.child("buffer", b)) if k else BufferIndex.empty()
        for i in range(per_block):
            S = draw_membership(T, n, root.child("S", b, i))
            runs.append(run_memorizer(seq, S, buf, root.child("run", b, i), block=b))
    return runs


def check_interpolating(seed: int = 0) -> list:
    runs = memorizer_runs(seed=seed)
    res = bounds.check_interpolating_identity(runs, bounds.BoundSearchCfg(bootstrap=64), z=3.0, seed=seed)
    out = []
    for name in ("delta", "pair"):
        diff = abs(res["lhs"] - res[f"rhs_{name}"])
        tol = 3.0 * res[f"combined_se_{name}"]
        out.append(_check(f"interpolating_identity_{name}", diff, tol, res[f"{name}_within"], runs=len(runs),
                          population_risk=res["lhs"], rhs=res[f"rhs_{name}"]))
    return out


CHECKS = {
    "numerics": check_numerics,
    "gradients": check_gradients,
    "oracle": check_oracle,
    "estimators": check_estimators,
    "interpolating": check_interpolating,
}


def run_validation(sections=SECTIONS, timings: dict | None = None) -> dict:
    """Run the named sections; wall-clock seconds go to `timings` so the report itself is reproducible."""
    report = {"sections": {}}
    for sec in sections:
        t0 = time.perf_counter()
        try:
            checks = CHECKS[sec]()
        except Exception as exc:  # a crashing check is a failed check
            checks = [_check(f"{sec}_raised", math.nan, 0.0, False, error=f"{type(exc).__name__}: {exc}")]
        if timings is not None:
            timings[sec] = time.perf_counter() - t0
        report["sections"][sec] = {"checks": checks, "passed": all(c["passed"] for c in checks)}
    report["passed"] = all(s["passed"] for s in report["sections"].values())
    return report
