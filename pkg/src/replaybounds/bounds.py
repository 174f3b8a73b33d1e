"""Generalization gap and loss-based bound estimates from a collection of runs.

Every MI term is a plug-in estimate from counts of (loss value, membership
bit) pairs across runs. A cell is a (task, sample) pair of the final
buffer or the current task. Per-run sums over cells are averaged over runs,
so the expectation over the buffer draw is taken by Monte Carlo.

Histogram keys:
    pooled_by_group  one histogram for buffer cells, one for current-task cells
    per_index        one histogram per (group, task, sample)
e-CMI additionally stratifies keys by block (runs sharing one supersample).

Standard errors come from a block bootstrap, so runs that share a
supersample are resampled together.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import LOG2, RngStream, c2_grid, invert_binary_kl, logdet_cov_gram, min_c1

PAIR_ALPHABET = ((0, 0), (0, 1), (1, 0), (1, 1))
DELTA_ALPHABET = (-1, 0, 1)
LOSS_ALPHABET = (0, 1)

BOUND_NAMES = ("e_mi", "e_cmi", "ld_mi", "binary_kl", "fast_loss", "fast_loss_l1", "fast_var")
FAST_BOUNDS = ("fast_loss", "fast_loss_l1", "fast_var")


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BoundSearchCfg:
    c2_points: int = 64
    gamma_grid: tuple = tuple(np.round(np.linspace(0.05, 0.95, 19), 2))
    estimation_mode: str = "pooled_by_group"
    confidence: float = 2.0
    bootstrap: int = 64
    miller_madow: bool = False
    # "scaled": C1 = min_c1 / gamma^2 (the constant the derivation supports);
    # "unscaled": C1 = min_c1, which is not a valid bound in general.
    fast_var_constant: str = "scaled"

    def __post_init__(self):
        if self.estimation_mode not in ("pooled_by_group", "per_index"):
            raise ValueError(f"unknown estimation_mode {self.estimation_mode!r}")
        if self.c2_points < 1:
            raise ValueError("empty admissible C2 grid")
        if not self.gamma_grid or not all(0.0 < g < 1.0 for g in self.gamma_grid):
            raise ValueError("gamma_grid must be a nonempty subset of (0, 1)")
        if self.fast_var_constant not in ("scaled", "unscaled"):
            raise ValueError(f"unknown fast_var_constant {self.fast_var_constant!r}")

    def to_dict(self) -> dict:
        return {
            "c2_points": self.c2_points,
            "gamma_grid": [float(g) for g in self.gamma_grid],
            "estimation_mode": self.estimation_mode,
            "confidence": self.confidence,
            "bootstrap": self.bootstrap,
            "miller_madow": self.miller_madow,
            "fast_var_constant": self.fast_var_constant,
        }


@dataclass(eq=False)
class Observations:
    """All cells of all runs flattened into parallel arrays."""

    run: np.ndarray
    block: np.ndarray  # dense block index per cell
    group: np.ndarray
    task: np.ndarray
    sample: np.ndarray
    L: np.ndarray  # (N, 2)
    s: np.ndarray
    run_block: np.ndarray  # (R,)
    kl: int
    n: int

    @property
    def runs(self) -> int:
        return len(self.run_block)

    @property
    def blocks(self) -> int:
        return int(self.run_block.max()) + 1

    @property
    def cells_per_run(self) -> int:
        return self.kl + self.n


def flatten(runs) -> Observations:
    if len(runs) == 0:
        raise ValueError("empty run list")
    first = runs[0].loss_table
    n = int((first.group == 1).sum())
    kl = int((first.group == 0).sum())
    T = runs[0].S.shape[0]
    for r in runs:
        t = r.loss_table
        if int((t.group == 1).sum()) != n or int((t.group == 0).sum()) != kl or r.S.shape[0] != T:
            raise ConfigMismatch("runs differ in (k*l, n, T)")
    _, run_block = np.unique(np.array([r.block for r in runs]), return_inverse=True)
    sizes = [r.loss_table.size for r in runs]
    run = np.repeat(np.arange(len(runs)), sizes)
    cat = lambda attr: np.concatenate([getattr(r.loss_table, attr) for r in runs])
    L = np.concatenate([r.loss_table.losses for r in runs])
    return Observations(run, run_block[run], cat("group"), cat("task"), cat("sample"), L, cat("s"),
                        run_block.astype(np.int64), kl, n)


def _run_mean(values: np.ndarray, obs: Observations) -> np.ndarray:
    return np.bincount(obs.run, weights=values, minlength=obs.runs) / obs.cells_per_run


def per_run_stats(obs: Observations):
    """Per-run gap, empirical risk and population-risk proxy."""
    idx = np.arange(len(obs.s))
    train = obs.L[idx, obs.s]
    test = obs.L[idx, 1 - obs.s]
    return _run_mean(test - train, obs), _run_mean(train, obs), _run_mean(test, obs)


def _cluster_se(values: np.ndarray, run_block: np.ndarray) -> float:
    """Standard error of the run mean, clustering runs by block."""
    B = int(run_block.max()) + 1
    if B < 2:
        return float("nan")
    N = len(values)
    resid = np.bincount(run_block, weights=values - values.mean(), minlength=B)
    return float(math.sqrt((resid ** 2).sum() * B / (B - 1)) / N)


def gap_estimate(runs):
    """(gap, empirical risk, population risk, s.e. of gap) averaged over runs."""
    if len(runs) < 2:
        raise ValueError("need at least 2 runs")
    obs = flatten(runs)
    gap, train, test = per_run_stats(obs)
    return float(gap.mean()), float(train.mean()), float(test.mean()), _cluster_se(gap, obs.run_block)


def _check_binary(L: np.ndarray) -> None:
    if not np.all((L == 0) | (L == 1)):
        raise ValueError("histogram estimators need 0-1 losses")


def value_codes(obs: Observations) -> dict:
    """Alphabet index of each cell for the pair, delta and column-1 loss variables."""
    _check_binary(obs.L)
    L0 = obs.L[:, 0].astype(np.int64)
    L1 = obs.L[:, 1].astype(np.int64)
    return {
        "pair": (2 * L0 + L1, len(PAIR_ALPHABET)),
        "delta": (L1 - L0 + 1, len(DELTA_ALPHABET)),
        "loss1": (L1, len(LOSS_ALPHABET)),
    }


def key_index(obs: Observations, mode: str, stratify: bool = False):
    """Dense histogram key per cell and the number of keys."""
    cols = [obs.group]
    if mode == "per_index":
        cols += [obs.task, obs.sample]
    elif mode != "pooled_by_group":
        raise ValueError(f"unknown estimation mode {mode!r}")
    if stratify:
        cols.append(obs.block)
    _, inv = np.unique(np.stack(cols, axis=1), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    return inv, int(inv.max()) + 1


def block_counts(obs: Observations, keys: np.ndarray, nkeys: int, codes: np.ndarray, A: int) -> np.ndarray:
    """Counts with shape (blocks, keys, A, 2)."""
    flat = ((obs.block * nkeys + keys) * A + codes) * 2 + obs.s
    return np.bincount(flat, minlength=obs.blocks * nkeys * A * 2).astype(float).reshape(obs.blocks, nkeys, A, 2)


def batch_mi(counts: np.ndarray, miller_madow: bool = False) -> np.ndarray:
    """Plug-in MI of each (A, 2) table in a (K, A, 2) stack; NaN for empty tables."""
    total = counts.sum(axis=(1, 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / total[:, None, None]
        pr = p.sum(axis=2, keepdims=True)
        pc = p.sum(axis=1, keepdims=True)
        terms = np.where(p > 0, p * np.log(p / (pr * pc)), 0.0)
    mi = terms.sum(axis=(1, 2))
    if miller_madow:
        mr = (pr[:, :, 0] > 0).sum(1)
        mc = (pc[:, 0, :] > 0).sum(1)
        mj = (p > 0).sum(axis=(1, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            mi = mi + ((mr - 1) + (mc - 1) - (mj - 1)) / (2.0 * total)
    mi = np.maximum(mi, 0.0)
    return np.where(total > 0, mi, np.nan)


@dataclass(eq=False)
class HistogramSet:
    """Per-block counts for one keying of the cells, for each value variable."""

    keys: np.ndarray
    nkeys: int
    counts: dict  # name -> (blocks, keys, A, 2)

    def pooled(self, weights: np.ndarray | None = None) -> dict:
        """Counts summed over blocks with optional block weights: name -> (keys, A, 2)."""
        if weights is None:
            return {k: c.sum(axis=0) for k, c in self.counts.items()}
        return {k: np.tensordot(weights, c, axes=1) for k, c in self.counts.items()}


def build_histograms(runs_or_obs, mode: str = "pooled_by_group", stratify: bool = False) -> HistogramSet:
    """Joint counts of (pair, delta, column-1 loss) with the membership bit, per key."""
    obs = runs_or_obs if isinstance(runs_or_obs, Observations) else flatten(runs_or_obs)
    if obs.runs < 2:
        raise ValueError("need at least 2 runs")
    keys, nkeys = key_index(obs, mode, stratify)
    counts = {name: block_counts(obs, keys, nkeys, codes, A) for name, (codes, A) in value_codes(obs).items()}
    return HistogramSet(keys, nkeys, counts)


def _cell_sum(obs: Observations, per_key: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Per-run (1/(kl+n)) * sum over cells of per_key[key(cell)]."""
    return np.bincount(obs.run, weights=per_key[keys], minlength=obs.runs) / obs.cells_per_run


def _wmean(x: np.ndarray, w: np.ndarray) -> float:
    return float((x * w).sum() / w.sum())


def empirical_variance(runs_or_obs, gamma: float) -> float:
    """Mean over runs of (1/(kl+n)) * sum over cells of (train loss - (1+gamma) * run empirical risk)^2."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    obs = runs_or_obs if isinstance(runs_or_obs, Observations) else flatten(runs_or_obs)
    return float(_variance_per_run(obs, np.array([gamma]))[:, 0].mean())


def _variance_per_run(obs: Observations, gammas: np.ndarray) -> np.ndarray:
    """(runs, len(gammas)) per-run loss variances."""
    train = obs.L[np.arange(len(obs.s)), obs.s]
    Lz = _run_mean(train, obs)
    dev = train[:, None] - (1.0 + gammas[None, :]) * Lz[obs.run][:, None]
    out = np.zeros((obs.runs, len(gammas)))
    for g in range(len(gammas)):
        out[:, g] = _run_mean(dev[:, g] ** 2, obs)
    return out


def variance_identity(runs_or_obs, gamma: float) -> float:
    """Empirical risk - (1 - gamma^2) * mean(L_Z^2); equals the loss variance for 0-1 losses."""
    obs = runs_or_obs if isinstance(runs_or_obs, Observations) else flatten(runs_or_obs)
    train = obs.L[np.arange(len(obs.s)), obs.s]
    Lz = _run_mean(train, obs)
    return float(Lz.mean() - (1 - gamma ** 2) * (Lz ** 2).mean())


def bound_sqrt_family(mi_per_key: np.ndarray, keys: np.ndarray, obs: Observations,
                      weights: np.ndarray | None = None) -> float:
    """Run-average of (1/(kl+n)) * sum over cells of sqrt(2 * MI)."""
    w = np.ones(obs.runs) if weights is None else weights
    return _wmean(_cell_sum(obs, np.sqrt(2.0 * np.nan_to_num(mi_per_key)), keys), w)


def sqrt_bound_from_cells(mi_cells: np.ndarray, k: int, l: int, n: int) -> float:
    """(1/(kl+n)) * sum of sqrt(2 * MI) over an explicit list of cell MIs."""
    if len(mi_cells) != k * l + n:
        raise ValueError(f"expected {k * l + n} cells, got {len(mi_cells)}")
    return float(np.sqrt(2.0 * np.asarray(mi_cells)).sum() / (k * l + n))


def bound_binary_kl(L_hat: float, budget: float):
    """(population-risk bound L*, gap bound L* - L_hat) from d(L_hat || (L_hat + L)/2) <= budget."""
    L_star = invert_binary_kl(min(max(L_hat, 0.0), 1.0), max(budget, 0.0))
    return L_star, L_star - L_hat


def bound_fast(risk_term: float, mi_term: float, c2_points: int = 64, variant: str = "loss"):
    """min over C2 of min_c1(C2) * risk_term + mi_term / C2; returns (value, C1, C2)."""
    grid = c2_grid(variant, c2_points)
    if len(grid) == 0:
        raise ValueError("empty admissible C2 grid")
    c1 = np.array([min_c1(c, variant) for c in grid])
    vals = c1 * risk_term + mi_term / grid
    i = int(np.argmin(vals))
    return float(vals[i]), float(c1[i]), float(grid[i])


def bound_fast_var(var_by_gamma: np.ndarray, gammas, mi_term: float, c2_points: int = 64,
                   constant: str = "scaled"):
    """min over (C2, gamma) of C1(C2, gamma) * Var(gamma) + mi_term / C2; returns (value, C1, C2, gamma)."""
    best = None
    for v, g in zip(var_by_gamma, gammas):
        scale = 1.0 / g ** 2 if constant == "scaled" else 1.0
        val, c1, c2 = bound_fast(scale * v, mi_term, c2_points)
        if best is None or val < best[0]:
            best = (val, c1 * scale, c2, float(g))
    return best


def bound_sgld(probe_logs, eta_schedule, xi_schedule, k: int, l: int, n: int, normalize: bool = True):
    """sqrt( sum_r logdet(I + eta_r^2 / xi_r^2 * Sigma_r) / (4 (kl + n)) ).

    probe_logs: per run, a list over steps of centered (m, d) probe matrices.
    Rows of all runs at a step are stacked; with normalize=True the scale
    carries 1 / ((m - 1) * runs) so the Gram matrix is the run-averaged
    sample covariance. eta_schedule, xi_schedule: callables of the 1-based step.
    """
    if not probe_logs:
        raise ValueError("no probe logs")
    R = len(probe_logs[0])
    if R == 0 or any(len(p) != R for p in probe_logs):
        raise ValueError("probe logs must cover the same steps 1..R in every run")
    total = 0.0
    for r in range(R):
        rows = np.concatenate([p[r] for p in probe_logs])
        xi = xi_schedule(r + 1)
        if xi <= 0:
            raise ValueError("xi must be positive for the trajectory bound")
        m = probe_logs[0][r].shape[0]
        norm = 1.0 / (max(m - 1, 1) * len(probe_logs)) if normalize else 1.0
        scale = eta_schedule(r + 1) ** 2 / xi ** 2 * norm
        if not np.any(rows):
            continue
        total += logdet_cov_gram(rows, scale)
    return math.sqrt(total / (4.0 * (k * l + n)))


@dataclass
class BoundReport:
    gap: float
    gap_se: float
    empirical_risk: float
    empirical_risk_se: float
    population_risk: float
    population_risk_se: float
    entries: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def entry(self, name: str) -> dict:
        for e in self.entries:
            if e["name"] == name:
                return e
        raise KeyError(name)

    def value(self, name: str) -> float:
        return self.entry(name)["value"]

    def to_dict(self) -> dict:
        return {
            "gap": self.gap,
            "gap_se": self.gap_se,
            "empirical_risk": self.empirical_risk,
            "empirical_risk_se": self.empirical_risk_se,
            "population_risk": self.population_risk,
            "population_risk_se": self.population_risk_se,
            "entries": self.entries,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BoundReport":
        return cls(**json.loads(text))

    CSV_HEADER = ("config_hash", "bound", "value", "se", "gap", "gap_se", "empirical_risk", "population_risk")

    def csv_rows(self, config_hash: str) -> list:
        return [(config_hash, e["name"], e["value"], e["se"], self.gap, self.gap_se, self.empirical_risk,
                 self.population_risk) for e in self.entries]


def _statistics(obs: Observations, hs: HistogramSet, hs_strat: HistogramSet | None, w_block: np.ndarray,
                cfg: BoundSearchCfg) -> dict:
    """All bound values under block weights w_block."""
    w = w_block[obs.run_block]
    gap, train, test = per_run_stats(obs)
    L_hat = _wmean(train, w)
    out = {"gap": _wmean(gap, w), "empirical_risk": L_hat, "population_risk": _wmean(test, w)}
    c = hs.pooled(w_block)
    mi = {k: batch_mi(v, cfg.miller_madow) for k, v in c.items()}
    mi = {k: np.nan_to_num(v) for k, v in mi.items()}
    run_sum = lambda per_key: _wmean(_cell_sum(obs, per_key, hs.keys), w)
    out["e_mi"] = run_sum(np.sqrt(2 * mi["pair"]))
    out["ld_mi"] = run_sum(np.sqrt(2 * mi["delta"]))
    if hs_strat is not None:
        # stratified histograms are per block, so block weights do not change them
        ms = np.nan_to_num(batch_mi(hs_strat.pooled()["pair"], cfg.miller_madow))
        out["e_cmi"] = _wmean(_cell_sum(obs, np.sqrt(2 * ms), hs_strat.keys), w)
    budget = run_sum(mi["pair"])
    out["mi_pair_sum"] = budget
    out["mi_delta_sum"] = run_sum(mi["delta"])
    out["mi_loss1_sum"] = run_sum(mi["loss1"])
    mi_min = run_sum(np.minimum(mi["pair"], 2 * mi["loss1"]))
    out["mi_min_sum"] = mi_min
    L_star, out["binary_kl"] = bound_binary_kl(L_hat, budget)
    out["binary_kl_population"] = L_star
    out["fast_loss"], out["fast_loss_c1"], out["fast_loss_c2"] = bound_fast(L_hat, mi_min, cfg.c2_points)
    out["fast_loss_l1"], out["fast_loss_l1_c1"], out["fast_loss_l1_c2"] = bound_fast(
        L_hat, out["mi_loss1_sum"], cfg.c2_points)
    gammas = np.asarray(cfg.gamma_grid, dtype=float)
    var = (_variance_per_run(obs, gammas) * w[:, None]).sum(0) / w.sum()
    (out["fast_var"], out["fast_var_c1"], out["fast_var_c2"], out["fast_var_gamma"]) = bound_fast_var(
        var, gammas, mi_min, cfg.c2_points, cfg.fast_var_constant)
    out["interp_delta"] = out["mi_delta_sum"] / LOG2
    out["interp_pair"] = budget / LOG2
    return out


def _bootstrap_weights(blocks: int, B: int, seed: int) -> np.ndarray:
    g = RngStream(seed, ("bootstrap",)).generator()
    draws = g.integers(0, blocks, size=(B, blocks))
    return np.stack([np.bincount(d, minlength=blocks) for d in draws]).astype(float)


def estimate_all(runs, cfg: BoundSearchCfg = BoundSearchCfg(), seed: int = 0, with_cmi: bool | None = None):
    """Point estimates and block-bootstrap standard errors of every statistic."""
    obs = flatten(runs)
    if obs.runs < 2:
        raise ValueError("need at least 2 runs")
    hs = build_histograms(obs, cfg.estimation_mode)
    sizes = np.bincount(obs.run_block)
    can_stratify = obs.blocks > 1 and sizes.min() >= 2
    if with_cmi is None:
        with_cmi = can_stratify
    if with_cmi and not can_stratify:
        raise ValueError("e-CMI needs at least 2 runs in every supersample block and 2 blocks")
    hs_strat = build_histograms(obs, cfg.estimation_mode, stratify=True) if with_cmi else None
    point = _statistics(obs, hs, hs_strat, np.ones(obs.blocks), cfg)
    reps = []
    if obs.blocks >= 2 and cfg.bootstrap > 1:
        for wb in _bootstrap_weights(obs.blocks, cfg.bootstrap, seed):
            reps.append(_statistics(obs, hs, hs_strat, wb, cfg))
    se = {k: (float(np.std([r[k] for r in reps], ddof=1)) if reps else float("nan")) for k in point}
    gap, train, test = per_run_stats(obs)
    se["gap"] = _cluster_se(gap, obs.run_block)
    se["empirical_risk"] = _cluster_se(train, obs.run_block)
    se["population_risk"] = _cluster_se(test, obs.run_block)
    if reps:
        se["interp_delta_diff"] = float(np.std([r["population_risk"] - r["interp_delta"] for r in reps], ddof=1))
        se["interp_pair_diff"] = float(np.std([r["population_risk"] - r["interp_pair"] for r in reps], ddof=1))
    return point, se, obs


def check_interpolating_identity(runs, cfg: BoundSearchCfg = BoundSearchCfg(), z: float = 3.0, seed: int = 0) -> dict:
    """Compare the population risk with sum MI(delta; S) / ((kl+n) log 2) and the pair-MI form.

    Applies only when every run has zero empirical risk on its training view.
    """
    obs = flatten(runs)
    _, train, _ = per_run_stats(obs)
    if np.any(train > 0):
        return {"applicable": False, "reason": "nonzero empirical risk", "satisfied": None}
    point, se, _ = estimate_all(runs, cfg, seed, with_cmi=False)
    lhs, lhs_se = point["population_risk"], se["population_risk"]
    res = {"applicable": True, "lhs": lhs, "lhs_se": lhs_se}
    ok = True
    for name in ("delta", "pair"):
        rhs, rhs_se = point[f"interp_{name}"], se[f"interp_{name}"]
        combined = math.sqrt(lhs_se ** 2 + rhs_se ** 2)
        res[f"rhs_{name}"] = rhs
        res[f"rhs_{name}_se"] = rhs_se
        res[f"combined_se_{name}"] = combined
        within = abs(lhs - rhs) <= z * combined + 1e-15
        res[f"{name}_within"] = bool(within)
        ok = ok and within
    res["satisfied"] = bool(ok)
    return res


def report(runs, cfg: BoundSearchCfg = BoundSearchCfg(), seed: int = 0, sgld: dict | None = None,
           metadata: dict | None = None) -> BoundReport:
    """Gap plus every bound entry with standard errors.

    sgld: optional dict with 'eta' and 'xi' callables; used when runs carry probe logs.
    """
    point, se, obs = estimate_all(runs, cfg, seed)
    entries = []
    params = {
        "e_mi": {},
        "e_cmi": {},
        "ld_mi": {},
        "binary_kl": {"population_bound": point["binary_kl_population"], "budget": point["mi_pair_sum"]},
        "fast_loss": {"C1": point["fast_loss_c1"], "C2": point["fast_loss_c2"]},
        "fast_loss_l1": {"C1": point["fast_loss_l1_c1"], "C2": point["fast_loss_l1_c2"]},
        "fast_var": {"C1": point["fast_var_c1"], "C2": point["fast_var_c2"], "gamma": point["fast_var_gamma"],
                     "constant": cfg.fast_var_constant},
    }
    for name in BOUND_NAMES:
        if name not in point:
            continue
        entries.append({"name": name, "value": point[name], "se": se[name], "params": params[name]})
    if sgld is not None and runs[0].probe_log is not None:
        logs = [r.probe_log for r in runs]
        k_l = obs.kl
        val = bound_sgld(logs, sgld["eta"], sgld["xi"], k_l, 1, obs.n)
        per_run = [bound_sgld([p], sgld["eta"], sgld["xi"], k_l, 1, obs.n) for p in logs]
        entries.append({"name": "sgld", "value": val, "se": float("nan"),
                        "params": {"per_run_mean": float(np.mean(per_run)), "pooled_runs": len(logs)}})
    meta = {
        "estimation_mode": cfg.estimation_mode,
        "runs": obs.runs,
        "blocks": obs.blocks,
        "kl": obs.kl,
        "n": obs.n,
        "evaluation_loss": "zero_one",
        "search": cfg.to_dict(),
        "mi_sums": {"pair": point["mi_pair_sum"], "delta": point["mi_delta_sum"], "loss1": point["mi_loss1_sum"],
                    "min": point["mi_min_sum"]},
        "interpolating": {"rhs_delta": point["interp_delta"], "rhs_pair": point["interp_pair"]},
    }
    meta.update(metadata or {})
    meta.setdefault("config_hash", config_hash(meta))
    return BoundReport(point["gap"], se["gap"], point["empirical_risk"], se["empirical_risk"],
                       point["population_risk"], se["population_risk"], entries, meta)


def config_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:16]


def reports_to_csv(rows, header=BoundReport.CSV_HEADER) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()
