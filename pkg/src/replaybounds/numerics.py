"""Scalar and matrix routines shared by the estimators.

Everything here is measured in nats.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG2 = math.log(2.0)

# bisection settings for invert_binary_kl
KL_INV_TOL = 1e-10
KL_INV_MAX_ITER = 200


class InfiniteDivergence(ValueError):
    """Raised when a binary KL divergence is +inf."""


def _xlogy(x: float, y: float) -> float:
    return 0.0 if x == 0.0 else x * math.log(y)


def binary_kl(p: float, q: float) -> float:
    """Relative entropy between Bernoulli(p) and Bernoulli(q)."""
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"probabilities out of range: p={p}, q={q}")
    if (q == 0.0 and p > 0.0) or (q == 1.0 and p < 1.0):
        raise InfiniteDivergence(f"infinite divergence: d({p} || {q})")
    val = _xlogy(p, p / q if p > 0 else 1.0) + _xlogy(1.0 - p, (1.0 - p) / (1.0 - q) if p < 1 else 1.0)
    return max(val, 0.0)


def invert_binary_kl(p_hat: float, budget: float, tol: float = KL_INV_TOL) -> float:
    """Largest L in [p_hat, 1] with d(p_hat || (p_hat + L)/2) <= budget.

    Returns 1.0 when even L = 1 fits inside the budget (the bound is vacuous).
    """
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"p_hat must lie in [0, 1], got {p_hat}")
    if budget < 0:
        raise ValueError(f"budget must be nonnegative, got {budget}")

    def d(L: float) -> float:
        # 1 - q is formed from complements; (p_hat + L) / 2 rounds to 1.0 when p_hat is within an ulp of 1
        q, q_c = 0.5 * (p_hat + L), 0.5 * ((1.0 - p_hat) + (1.0 - L))
        val = _xlogy(p_hat, p_hat / q if p_hat > 0 else 1.0)
        val += _xlogy(1.0 - p_hat, (1.0 - p_hat) / q_c if p_hat < 1 else 1.0)
        return max(val, 0.0)

    if d(1.0) <= budget:
        return 1.0
    lo, hi = p_hat, 1.0
    for _ in range(KL_INV_MAX_ITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if d(mid) <= budget:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class JointHistogram:
    """Counts of (value, s) pairs, rows indexed by the value alphabet, columns by s in {0, 1}."""

    values: tuple
    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.values), 2):
            raise ValueError(f"counts shape {self.counts.shape} does not match {len(self.values)} values x 2")
        if np.any(self.counts < 0):
            raise ValueError("negative counts")

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @classmethod
    def from_observations(cls, values: Sequence, s: Sequence[int], alphabet: Sequence) -> "JointHistogram":
        index = {v: i for i, v in enumerate(alphabet)}
        counts = np.zeros((len(alphabet), 2))
        for v, b in zip(values, s):
            counts[index[v], int(b)] += 1
        return cls(tuple(alphabet), counts)

    def pushforward(self, fn, alphabet: Sequence) -> "JointHistogram":
        """Histogram of fn(value) against s."""
        index = {v: i for i, v in enumerate(alphabet)}
        counts = np.zeros((len(alphabet), 2))
        for row, v in enumerate(self.values):
            counts[index[fn(v)]] += self.counts[row]
        return JointHistogram(tuple(alphabet), counts)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mi_from_counts(counts: np.ndarray, miller_madow: bool = False) -> float:
    """Plug-in mutual information between the row and column variables of a count table."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("no observations")
    p = counts / total
    pr = p.sum(axis=1)
    pc = p.sum(axis=0)
    nz = p > 0
    mi = float((p[nz] * np.log(p[nz] / np.outer(pr, pc)[nz])).sum())
    if miller_madow:
        mr, mc, mj = (pr > 0).sum(), (pc > 0).sum(), nz.sum()
        mi += ((mr - 1) + (mc - 1) - (mj - 1)) / (2.0 * total)
    return max(mi, 0.0)


def plugin_mi(hist: JointHistogram, miller_madow: bool = False) -> float:
    """Mutual information of the empirical joint of a histogram (nats).

    Miller-Madow bias correction is off by default: the ordering relations
    between the bounds hold exactly only for the raw plug-in value.
    """
    if hist.total < 1:
        raise ValueError("no observations")
    return mi_from_counts(hist.counts, miller_madow=miller_madow)


def logdet_cov_gram(probe_rows: np.ndarray, scale: float) -> float:
    """log|I_d + scale * A^T A| for an m x d matrix A of centered rows.

    Evaluated on whichever of A^T A (d x d) and A A^T (m x m) is smaller; the
    nonzero spectra coincide so the values agree.
    """
    A = np.asarray(probe_rows, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0:
        raise ValueError("no probes")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    m, d = A.shape
    gram = A @ A.T if m <= d else A.T @ A
    M = np.eye(gram.shape[0]) + scale * gram
    sign, logdet = np.linalg.slogdet(M)
    if sign <= 0:
        raise np.linalg.LinAlgError("matrix I + scale*Gram is not positive definite")
    return max(float(logdet), 0.0)


def c2_upper(variant: str) -> float:
    """Open upper end of the admissible C2 interval."""
    if variant == "hypothesis":
        return LOG2
    if variant == "loss":
        return LOG2 / 2.0
    raise ValueError(f"unknown variant {variant!r}")


def min_c1(c2: float, variant: str) -> float:
    """Smallest admissible C1 for a given C2 in the weighted (fast-rate) bounds.

    hypothesis: -log(2 - e^{c2}) / c2 - 1,        c2 in (0, log 2)
    loss:       -log(2 - e^{2 c2}) / (2 c2) - 1,  c2 in (0, log(2)/2)
    """
    upper = c2_upper(variant)
    if not 0.0 < c2 < upper:
        raise ValueError(f"constraint violated: c2={c2} outside (0, {upper})")
    a = c2 if variant == "hypothesis" else 2.0 * c2
    # -log(2 - e^a) = -log1p(1 - e^a) = -log1p(-expm1(a))
    return -math.log1p(-math.expm1(a)) / a - 1.0


def c2_grid(variant: str, points: int = 64, lo_frac: float = 1e-3, hi_frac: float = 1.0 - 1e-9) -> np.ndarray:
    """Log-spaced C2 values strictly inside the admissible interval."""
    upper = c2_upper(variant)
    return np.geomspace(lo_frac * upper, hi_frac * upper, points)


def _tag(t) -> int:
    if isinstance(t, (int, np.integer)):
        if t < 0:
            raise ValueError("path tags must be nonnegative")
        return int(t)
    if isinstance(t, str):
        return zlib.crc32(t.encode("utf-8"))
    raise TypeError(f"unsupported path tag {t!r}")


@dataclass(frozen=True)
class RngStream:
    """A named random stream: (master_seed, path) always maps to the same bytes."""

    master_seed: int
    path: tuple = field(default_factory=tuple)

    def child(self, *tags) -> "RngStream":
        return RngStream(self.master_seed, self.path + tuple(_tag(t) for t in tags))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=tuple(_tag(t) for t in self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def bytes(self, n: int) -> bytes:
        return self.generator().bytes(n)
