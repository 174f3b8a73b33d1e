"""Exact ground truth on tiny finite problems.

A toy problem has T tasks over a finite sample alphabet, a finite
hypothesis set with a loss table, and a stochastic learner. Two
independent routes compute the hypothesis-based quantities:

    enumerate_joint + exact_hypothesis_bounds
        materialize every atom (supersample, membership bits, U, V, W) and
        sum directly; limited to 1e7 atoms.
    exact_quantities
        per (U, V), marginalize the learner over samples outside the buffer
        cells and enumerate only what each term needs.

Learners see only training elements (column S of each pair). learner_data
"all" trains on every task's training elements, so W does not depend on
(U, V); "replay" trains on the buffer cells plus the final task.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .numerics import LOG2, JointHistogram, RngStream, binary_kl, c2_grid, c2_upper, invert_binary_kl, min_c1, plugin_mi

ATOM_CAP = 10 ** 7
ROW_SUM_TOL = 1e-12
# MI values below this are cancellation noise from entropy differences
MI_FLOOR = 1e-14
# Subgaussian constant for the input-output bound. 1/2 is valid for [0, 1]
# losses, but the CMI bound is guaranteed to be tighter only against sigma = 1.
DEFAULT_SIGMA = 1.0


class EnumerationTooLarge(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ToySpec:
    dist: np.ndarray  # (T, A) per-task sample distributions
    loss: np.ndarray  # (H, A) loss of each hypothesis on each symbol
    n: int
    learner: str = "erm"  # erm | softmax | uniform
    temperature: float = 1.0
    learner_data: str = "all"  # all | replay

    def __post_init__(self):
        dist = np.asarray(self.dist, dtype=float)
        loss = np.asarray(self.loss, dtype=float)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "loss", loss)
        T, A = dist.shape
        H = loss.shape[0]
        if not (2 <= T <= 4 and 1 <= self.n <= 4):
            raise ValueError(f"need 2 <= T <= 4 and 1 <= n <= 4, got T={T}, n={self.n}")
        if not (1 <= A <= 4 and 1 <= H <= 16):
            raise ValueError(f"need alphabet <= 4 and <= 16 hypotheses, got {A}, {H}")
        if loss.shape != (H, A):
            raise ValueError("loss table must be hypotheses x alphabet")
        if np.any(dist < 0) or np.any(np.abs(dist.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("distribution rows must be nonnegative and sum to 1")
        if np.any(loss < 0) or np.any(loss > 1):
            raise ValueError("losses must lie in [0, 1]")
        if self.learner not in ("erm", "softmax", "uniform"):
            raise ValueError(f"unknown learner {self.learner!r}")
        if self.learner == "softmax" and not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.learner_data not in ("all", "replay"):
            raise ValueError(f"unknown learner_data {self.learner_data!r}")

    @property
    def T(self) -> int:
        return self.dist.shape[0]

    @property
    def A(self) -> int:
        return self.dist.shape[1]

    @property
    def H(self) -> int:
        return self.loss.shape[0]

    @property
    def binary_loss(self) -> bool:
        return bool(np.all((self.loss == 0) | (self.loss == 1)))

    def to_json(self) -> str:
        return json.dumps({"dist": self.dist.tolist(), "loss": self.loss.tolist(), "n": self.n,
                           "learner": self.learner, "temperature": self.temperature,
                           "learner_data": self.learner_data}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ToySpec":
        d = json.loads(text)
        return cls(np.array(d["dist"]), np.array(d["loss"]), d["n"], d["learner"], d["temperature"],
                   d["learner_data"])


def learner_kernel(toy: ToySpec, loss_sums: np.ndarray) -> np.ndarray:
    """P(w | training data) from the (..., H) summed training losses of each hypothesis."""
    if toy.learner == "uniform":
        return np.full(loss_sums.shape, 1.0 / toy.H)
    if toy.learner == "erm":
        # argmin returns the first minimizer: ties go to the lowest index
        out = np.zeros(loss_sums.shape)
        np.put_along_axis(out, np.argmin(loss_sums, axis=-1)[..., None], 1.0, axis=-1)
        return out
    z = -(loss_sums - loss_sums.min(axis=-1, keepdims=True)) / toy.temperature
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def buffer_choices(T: int, n: int, k: int, l: int):
    """All (U, V) with U a k-subset of the first T-1 tasks and V an l-subset of [n]."""
    if not (0 <= k <= T - 1 and 0 <= l <= n):
        raise ValueError(f"invalid buffer sizes k={k}, l={l} for T={T}, n={n}")
    if (k == 0) != (l == 0):
        raise ValueError("k and l must both be zero or both be positive")
    return [(U, V) for U in itertools.combinations(range(T - 1), k) for V in itertools.combinations(range(n), l)]


def cells_of(toy: ToySpec, U, V):
    """Buffer cells then current-task cells, as (task, sample) pairs."""
    return [(u, v) for u in U for v in V] + [(toy.T - 1, j) for j in range(toy.n)]


def _digits(codes: np.ndarray, m: int, base: int) -> np.ndarray:
    """(len(codes), m) little-endian digits."""
    return (codes[:, None] // base ** np.arange(m)[None, :]) % base


def _entropy_rows(P: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(P > 0, -P * np.log(P), 0.0)
    return t.sum(axis=-1)


def _mi_joint(P: np.ndarray) -> float:
    """MI between the row and column variables of a joint probability matrix."""
    pr = P.sum(axis=1, keepdims=True)
    pc = P.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(P > 0, P * np.log(P / (pr * pc)), 0.0)
    mi = float(t.sum())
    return mi if mi > MI_FLOOR else 0.0


# ---------------------------------------------------------------- brute force

@dataclass(eq=False)
class FullJoint:
    """Every atom of (supersample, S, (U, V), W) with its probability."""

    toy: ToySpec
    k: int
    l: int
    choices: list
    d_code: np.ndarray
    s_code: np.ndarray
    uv: np.ndarray
    w: np.ndarray
    prob: np.ndarray

    @property
    def atoms(self) -> int:
        return len(self.prob)

    def supersample(self) -> np.ndarray:
        """(atoms, T, n, 2) sample symbols."""
        t = self.toy
        return _digits(self.d_code, 2 * t.T * t.n, t.A).reshape(-1, t.T, t.n, 2)

    def membership(self) -> np.ndarray:
        t = self.toy
        return _digits(self.s_code, t.T * t.n, 2).reshape(-1, t.T, t.n)


def atom_count(toy: ToySpec, k: int, l: int) -> int:
    """A^(2Tn) * 2^(Tn) * C(T-1, k) * C(n, l) * H."""
    T, n = toy.T, toy.n
    return toy.A ** (2 * T * n) * 2 ** (T * n) * math.comb(T - 1, k) * math.comb(n, l) * toy.H


def enumerate_joint(toy: ToySpec, k: int, l: int, cap: int = ATOM_CAP) -> FullJoint:
    """Materialize the exact joint distribution, one row per atom."""
    size = atom_count(toy, k, l)
    if size > cap:
        raise EnumerationTooLarge(f"{size} atoms exceeds the cap of {cap}")
    T, n, A, H = toy.T, toy.n, toy.A, toy.H
    choices = buffer_choices(T, n, k, l)
    Nd, Ns = A ** (2 * T * n), 2 ** (T * n)
    d = _digits(np.arange(Nd), 2 * T * n, A).reshape(Nd, T, n, 2)
    pd = np.ones(Nd)
    for t in range(T):
        pd *= toy.dist[t][d[:, t]].prod(axis=(1, 2))
    s = _digits(np.arange(Ns), T * n, 2).reshape(Ns, T, n)
    train = np.where(s[None] == 1, d[:, None, :, :, 1], d[:, None, :, :, 0])  # (Nd, Ns, T, n)
    parts = {k_: [] for k_ in ("d", "s", "uv", "w", "p")}
    for ci, (U, V) in enumerate(choices):
        if toy.learner_data == "all":
            data = train.reshape(Nd, Ns, T * n)
        else:
            cells = cells_of(toy, U, V)
            data = np.stack([train[:, :, t, j] for t, j in cells], axis=-1)
        sums = toy.loss.T[data].sum(axis=2)  # (Nd, Ns, H)
        K = learner_kernel(toy, sums)
        p = pd[:, None, None] * K / (Ns * len(choices))
        parts["d"].append(np.broadcast_to(np.arange(Nd)[:, None, None], p.shape).ravel())
        parts["s"].append(np.broadcast_to(np.arange(Ns)[None, :, None], p.shape).ravel())
        parts["uv"].append(np.full(p.size, ci))
        parts["w"].append(np.broadcast_to(np.arange(H)[None, None, :], p.shape).ravel())
        parts["p"].append(p.ravel())
    cat = {k_: np.concatenate(v) for k_, v in parts.items()}
    return FullJoint(toy, k, l, choices, cat["d"], cat["s"], cat["uv"], cat["w"], cat["p"])


def _combine(*cols) -> np.ndarray:
    _, inv = np.unique(np.stack(cols, axis=1), axis=0, return_inverse=True)
    return inv.reshape(-1)


def _group_entropy(prob: np.ndarray, g: np.ndarray, key: np.ndarray, G: int) -> np.ndarray:
    """Per group, entropy of `key` under prob restricted to the group and renormalized."""
    gk = _combine(g, key)
    p_gk = np.bincount(gk, weights=prob)
    g_of = np.zeros(len(p_gk), dtype=np.int64)
    g_of[gk] = g
    p_g = np.bincount(g, weights=prob, minlength=G)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p_gk > 0, -p_gk * np.log(p_gk / p_g[g_of]), 0.0)
        return np.bincount(g_of, weights=t, minlength=G) / p_g


def grouped_mi(prob: np.ndarray, g: np.ndarray, x: np.ndarray, y: np.ndarray):
    """(group probabilities, I(X; Y | group = g) per group) by direct summation."""
    g = _combine(g)
    G = int(g.max()) + 1
    p_g = np.bincount(g, weights=prob, minlength=G)
    mi = (_group_entropy(prob, g, x, G) + _group_entropy(prob, g, y, G) - _group_entropy(prob, g, _combine(x, y), G))
    return p_g, np.where(mi > MI_FLOOR, mi, 0.0)


def exact_hypothesis_bounds(joint: FullJoint, which: str, sigma: float = DEFAULT_SIGMA) -> float:
    """Hypothesis-based bound values by direct summation over atoms.

    hyp_mi: E_{U,V} sqrt(2 sigma^2 / (kl+n) * I(W; training elements of the cells))
    hyp_cmi: E_{U,V} (1/(kl+n)) sum_c E sqrt(2 I(W; S_c | cell supersample))
    hyp_kl: population-risk bound from the binary KL form, minus the empirical risk
    hyp_fast: min over C2 of min_c1(C2) * L_hat + CMI sum / C2
    """
    q = _brute_quantities(joint, sigma)
    if which in q:
        return q[which]
    raise ValueError(f"unknown bound {which!r}")


def _brute_quantities(joint: FullJoint, sigma: float = DEFAULT_SIGMA) -> dict:
    toy = joint.toy
    dt = joint.supersample()
    S = joint.membership()
    idx = np.arange(joint.atoms)
    hyp_mi = hyp_cmi = cmi = L_hat = L_pop = 0.0
    nch = len(joint.choices)
    for ci, (U, V) in enumerate(joint.choices):
        sel = joint.uv == ci
        p = joint.prob[sel]
        pu = p.sum()
        cells = cells_of(toy, U, V)
        m = len(cells)
        zc = np.stack([dt[sel, t, j] for t, j in cells], axis=1)  # (atoms, m, 2)
        sc = np.stack([S[sel, t, j] for t, j in cells], axis=1)  # (atoms, m)
        w = joint.w[sel]
        train = np.take_along_axis(zc, sc[:, :, None], axis=2)[:, :, 0]
        test = np.take_along_axis(zc, 1 - sc[:, :, None], axis=2)[:, :, 0]
        train_code = (train * toy.A ** np.arange(m)).sum(1)
        zt_code = (zc.reshape(len(p), -1) * toy.A ** np.arange(2 * m)).sum(1)
        _, I1 = grouped_mi(p, np.zeros(len(p), dtype=np.int64), w, train_code)
        hyp_mi += pu * math.sqrt(2 * sigma ** 2 / m * I1[0])
        for c in range(m):
            pg, Ig = grouped_mi(p, zt_code, w, sc[:, c])
            hyp_cmi += (pg * np.sqrt(2 * Ig)).sum() / m
            cmi += (pg * Ig).sum() / m
        L_hat += (p * toy.loss[w[:, None], train].mean(1)).sum()
        L_pop += (p * toy.loss[w[:, None], test].mean(1)).sum()
    kl_pop = invert_binary_kl(min(max(L_hat, 0.0), 1.0), cmi)
    return {"hyp_mi": hyp_mi, "hyp_cmi": hyp_cmi, "cmi_sum": cmi, "L_hat": L_hat, "L": L_pop, "gap": L_pop - L_hat,
            "hyp_kl": kl_pop - L_hat, "kl_population": kl_pop, "hyp_fast": minimize_hyp_fast(L_hat, cmi)[0]}


def minimize_hyp_fast(L_hat: float, cmi: float):
    """min over C2 in (0, log 2) of min_c1(C2) * L_hat + cmi / C2; returns (value, C2)."""
    f = lambda c: min_c1(c, "hypothesis") * L_hat + cmi / c
    grid = c2_grid("hypothesis", 256)
    vals = np.array([f(c) for c in grid])
    i = int(np.argmin(vals))
    best, arg = float(vals[i]), float(grid[i])
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    if hi > lo:
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.fun < best:
            best, arg = float(res.fun), float(res.x)
    return best, arg


# ---------------------------------------------------------------- factorized

@dataclass
class ExactResult:
    hyp_mi: float
    hyp_cmi: float
    hyp_kl: float
    kl_population: float
    hyp_fast: float
    fast_c2: float
    cmi_sum: float
    L_hat: float
    L: float
    gap: float
    io_terms: list  # per (U, V): (prob, kl+n, I(W; cell training elements))
    cell_loss_joints: list = field(default_factory=list)  # per (U, V): list of (4, 2) pair-vs-S tables


def _position_kernels(toy: ToySpec):
    """Learner kernel over all T*n training positions (learner_data='all')."""
    m = toy.T * toy.n
    size = toy.A ** m * toy.H
    if size > ATOM_CAP:
        raise EnumerationTooLarge(f"{size} training atoms exceeds the cap of {ATOM_CAP}")
    codes = np.arange(toy.A ** m)
    z = _digits(codes, m, toy.A)
    task_of = np.repeat(np.arange(toy.T), toy.n)
    pz = toy.dist[task_of[None, :], z].prod(axis=1)
    K = learner_kernel(toy, toy.loss.T[z].sum(axis=1))
    return z, pz, K


def _cell_kernel(toy: ToySpec, cells, full):
    """P(z_C, w) over training symbols of the cells, shape (A^m, H)."""
    m = len(cells)
    if toy.learner_data == "all":
        z, pz, K = full
        pos = [t * toy.n + j for t, j in cells]
        code = (z[:, pos] * toy.A ** np.arange(m)).sum(1)
        return np.stack([np.bincount(code, weights=pz * K[:, h], minlength=toy.A ** m) for h in range(toy.H)], 1)
    zc = _digits(np.arange(toy.A ** m), m, toy.A)
    pz = np.ones(len(zc))
    for c, (t, _) in enumerate(cells):
        pz *= toy.dist[t][zc[:, c]]
    return pz[:, None] * learner_kernel(toy, toy.loss.T[zc].sum(axis=1))


def _cmi_terms(toy: ToySpec, cells, Kbar: np.ndarray, chunk_atoms: int = 2 ** 21):
    """Per cell, (E sqrt(2 I(W;S_c|z~)), E I(W;S_c|z~)) over cell supersamples z~."""
    m, A, H = len(cells), toy.A, toy.H
    bits = _digits(np.arange(2 ** m), m, 2)  # (2^m, m)
    tasks = np.array([t for t, _ in cells])
    sq = np.zeros(m)
    ci = np.zeros(m)
    total = A ** (2 * m)
    step = max(1, chunk_atoms // (2 ** m * H))
    for start in range(0, total, step):
        codes = np.arange(start, min(start + step, total))
        zt = _digits(codes, 2 * m, A).reshape(-1, m, 2)
        pz = toy.dist[tasks[None, :], zt[:, :, 0]].prod(1) * toy.dist[tasks[None, :], zt[:, :, 1]].prod(1)
        train = zt[:, np.arange(m)[None, :], bits]  # (chunk, 2^m, m)
        Kb = Kbar[(train * A ** np.arange(m)).sum(-1)]  # (chunk, 2^m, H)
        Hbar = _entropy_rows(Kb.mean(1))
        for c in range(m):
            h0 = _entropy_rows(Kb[:, bits[:, c] == 0].mean(1))
            h1 = _entropy_rows(Kb[:, bits[:, c] == 1].mean(1))
            I = Hbar - 0.5 * (h0 + h1)
            I = np.where(I > MI_FLOOR, I, 0.0)
            sq[c] += (pz * np.sqrt(2 * I)).sum()
            ci[c] += (pz * I).sum()
    return sq, ci


def _loss_pair_joint(toy: ToySpec, task: int, Kc: np.ndarray) -> np.ndarray:
    """(4, 2) joint of the loss pair code 2*L0 + L1 and S for one cell; Kc is P(w | training symbol)."""
    mu = toy.dist[task]
    out = np.zeros((4, 2))
    for z0, z1, s in itertools.product(range(toy.A), range(toy.A), (0, 1)):
        pw = Kc[z1 if s else z0]
        code = (2 * toy.loss[:, z0] + toy.loss[:, z1]).astype(int)
        out[:, s] += np.bincount(code, weights=0.5 * mu[z0] * mu[z1] * pw, minlength=4)
    return out


def exact_quantities(toy: ToySpec, k: int, l: int, sigma: float = DEFAULT_SIGMA, with_cmi: bool = True,
                     cap: int = ATOM_CAP) -> ExactResult:
    """Exact hypothesis-based bounds and gap through per-(U, V) marginalization."""
    choices = buffer_choices(toy.T, toy.n, k, l)
    m = k * l + toy.n
    if with_cmi:
        size = len(choices) * toy.A ** (2 * m) * 2 ** m * toy.H
        if size > cap:
            raise EnumerationTooLarge(f"{size} conditional atoms exceeds the cap of {cap}")
    full = _position_kernels(toy) if toy.learner_data == "all" else None
    pu = 1.0 / len(choices)
    hyp_mi = hyp_cmi = cmi = L_hat = L_pop = 0.0
    io_terms, loss_joints = [], []
    for U, V in choices:
        cells = cells_of(toy, U, V)
        Pzw = _cell_kernel(toy, cells, full)  # (A^m, H)
        I = _mi_joint(Pzw)
        io_terms.append((pu, m, I))
        hyp_mi += pu * math.sqrt(2 * sigma ** 2 / m * I)
        zc = _digits(np.arange(toy.A ** m), m, toy.A)
        L_hat += pu * (Pzw * toy.loss.T[zc].mean(1)).sum()
        pw = Pzw.sum(0)
        pop = np.mean([toy.loss @ toy.dist[t] for t, _ in cells], axis=0)
        L_pop += pu * float(pw @ pop)
        # P(w | z_c) for each single cell, marginalizing the others
        joints = []
        for c, (t, _) in enumerate(cells):
            pc = np.stack([np.bincount(zc[:, c], weights=Pzw[:, h], minlength=toy.A) for h in range(toy.H)], 1)
            Kc = pc / np.where(pc.sum(1, keepdims=True) > 0, pc.sum(1, keepdims=True), 1.0)
            joints.append(_loss_pair_joint(toy, t, Kc) if toy.binary_loss else None)
        loss_joints.append(joints)
        if with_cmi:
            pz = Pzw.sum(1, keepdims=True)
            Kbar = Pzw / np.where(pz > 0, pz, 1.0)
            sq, ci = _cmi_terms(toy, cells, Kbar)
            hyp_cmi += pu * sq.sum() / m
            cmi += pu * ci.sum() / m
    nan = float("nan")
    if with_cmi:
        pop3 = invert_binary_kl(min(max(L_hat, 0.0), 1.0), cmi)
        t4, c2 = minimize_hyp_fast(L_hat, cmi)
    else:
        pop3 = t4 = c2 = hyp_cmi = cmi = nan
    return ExactResult(hyp_mi, hyp_cmi, pop3 - L_hat, pop3, t4, c2, cmi, L_hat, L_pop, L_pop - L_hat, io_terms,
                       loss_joints)


def check_buffer_monotonicity(toy: ToySpec, k: int, l: int) -> dict:
    """Compare E g(I(W; cells) / (kl+n)) at (k, l) and (k+1, l+1) for g in {sqrt, identity}."""
    if not (1 <= k <= toy.T - 2 and 1 <= l <= toy.n - 1):
        raise ValueError(f"need 1 <= k <= T-2 and 1 <= l <= n-1, got k={k}, l={l}")
    out = {}
    small = exact_quantities(toy, k, l, with_cmi=False).io_terms
    big = exact_quantities(toy, k + 1, l + 1, with_cmi=False).io_terms
    for name, g in (("sqrt", math.sqrt), ("identity", lambda x: x)):
        lhs = sum(p * g(I / m) for p, m, I in small)
        rhs = sum(p * g(I / m) for p, m, I in big)
        out[name] = {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + 1e-10}
    out["holds"] = all(v["holds"] for v in out.values() if isinstance(v, dict))
    return out


def random_toyspec(rng: RngStream, T: int = 3, max_n: int = 3, max_alphabet: int = 3, max_hypotheses: int = 6,
                   binary: bool | None = None) -> ToySpec:
    """A random toy problem: Dirichlet task distributions, random loss table and learner."""
    g = rng.generator()
    n = int(g.integers(2, max_n + 1))
    A = int(g.integers(2, max_alphabet + 1))
    H = int(g.integers(2, max_hypotheses + 1))
    dist = g.dirichlet(np.ones(A), size=T)
    dist = dist / dist.sum(axis=1, keepdims=True)
    if binary is None:
        binary = bool(g.random() < 0.75)
    loss = g.integers(0, 2, size=(H, A)).astype(float) if binary else g.integers(0, 5, size=(H, A)) / 4.0
    learner = ("erm", "softmax", "uniform")[int(g.choice(3, p=[0.45, 0.45, 0.1]))]
    temperature = float(np.exp(g.uniform(np.log(0.2), np.log(3.0))))
    data = "all" if g.random() < 0.7 else "replay"
    return ToySpec(dist, loss, n, learner, temperature, data)


# ---------------------------------------------------------------- estimator validation

def plugin_error_ladder(table: np.ndarray, ladder, seed: int, exact: float | None = None) -> np.ndarray:
    """|plug-in MI - exact MI| at each sample size of a ladder, using nested prefixes of one i.i.d. stream.

    table: (V, 2) joint probabilities of (value, membership bit).
    """
    P = np.asarray(table, dtype=float)
    P = P / P.sum()
    if exact is None:
        exact = _mi_joint(P)
    ladder = [int(x) for x in ladder]
    g = RngStream(seed, ("plugin_ladder",)).generator()
    draws = g.choice(P.size, size=max(ladder), p=P.ravel())
    values = tuple(range(P.shape[0]))
    errs = []
    for N in ladder:
        counts = np.bincount(draws[:N], minlength=P.size).reshape(P.shape)
        errs.append(abs(plugin_mi(JointHistogram(values, counts)) - exact))
    return np.array(errs)


def derived_tables(pair_table: np.ndarray) -> dict:
    """Pair, delta and column-1 loss joints with S from a (4, 2) pair joint."""
    P = np.asarray(pair_table, dtype=float)
    delta = np.zeros((3, 2))
    loss1 = np.zeros((2, 2))
    for code in range(4):
        L0, L1 = divmod(code, 2)
        delta[L1 - L0 + 1] += P[code]
        loss1[L1] += P[code]
    return {"pair": P, "delta": delta, "loss1": loss1}


def oracle_validate_estimators(result: ExactResult, ladder, seed: int, choice: int = 0) -> dict:
    """Plug-in vs exact MI for every cell term of one buffer realization.

    Returns exact values, per-term absolute errors over the ladder, and
    their mean across terms.
    """
    joints = result.cell_loss_joints[choice]
    if any(j is None for j in joints):
        raise ValueError("estimator validation needs 0-1 losses")
    terms = {}
    for c, pair in enumerate(joints):
        for name, tab in derived_tables(pair).items():
            terms[f"cell{c}:{name}"] = tab
    exact = {k: _mi_joint(v) for k, v in terms.items()}
    errors = {k: plugin_error_ladder(v, ladder, seed * 1000003 + i, exact[k]).tolist()
              for i, (k, v) in enumerate(terms.items())}
    mean_err = np.mean(np.array(list(errors.values())), axis=0)
    return {"ladder": [int(x) for x in ladder], "exact": exact, "errors": errors, "mean_error": mean_err.tolist()}
