import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replaybounds import bounds
from replaybounds.bounds import (BoundReport, BoundSearchCfg, ConfigMismatch, bound_binary_kl, bound_fast,
                                 bound_fast_var, bound_sgld, build_histograms, check_interpolating_identity,
                                 empirical_variance, estimate_all, flatten, gap_estimate, sqrt_bound_from_cells,
                                 variance_identity)
from replaybounds.cl_train import LossTable, RunRecord
from replaybounds.numerics import LOG2, invert_binary_kl
from replaybounds.tasks import BufferIndex


def make_run(losses, s, kl, block=0, T=2):
    """A run whose first kl cells are buffer cells and the rest current-task cells."""
    losses = np.asarray(losses, dtype=float)
    N = len(losses)
    n = N - kl
    group = np.r_[np.zeros(kl, dtype=np.int64), np.ones(n, dtype=np.int64)]
    task = np.r_[np.zeros(kl, dtype=np.int64), np.full(n, T - 1)]
    sample = np.r_[np.arange(kl), np.arange(n)].astype(np.int64)
    table = LossTable(task, sample, losses, np.asarray(s, dtype=np.int64), group)
    S = np.zeros((T, max(n, kl)), dtype=np.uint8)
    return RunRecord(0, (), S, [BufferIndex.empty()], None, table, None, {}, "ok", block)


def memorizer_runs(runs=64, blocks=8, kl=2, n=3, alpha=1.0, seed=0):
    """Zero training loss; each test loss is 1 with probability alpha."""
    g = np.random.default_rng(seed)
    out = []
    for r in range(runs):
        s = g.integers(0, 2, kl + n)
        L = np.zeros((kl + n, 2))
        L[np.arange(kl + n), 1 - s] = (g.random(kl + n) < alpha).astype(float)
        out.append(make_run(L, s, kl, block=r % blocks))
    return out


def noise_runs(runs=64, blocks=8, kl=2, n=3, p=0.3, seed=0):
    """Losses independent of membership."""
    g = np.random.default_rng(seed)
    return [make_run((g.random((kl + n, 2)) < p).astype(float), g.integers(0, 2, kl + n), kl, block=r % blocks)
            for r in range(runs)]


def test_gap_of_full_memorizer():
    gap, L_hat, L, se = gap_estimate(memorizer_runs())
    assert (gap, L_hat, L) == (1.0, 0.0, 1.0)
    assert se == 0.0


def test_flatten_rejects_mismatched_runs():
    a = make_run(np.zeros((3, 2)), [0, 1, 0], 1)
    b = make_run(np.zeros((4, 2)), [0, 1, 0, 1], 1)
    with pytest.raises(ConfigMismatch):
        flatten([a, b])
    with pytest.raises(ValueError):
        flatten([])


def test_histogram_estimators_need_binary_losses():
    runs = [make_run(np.full((3, 2), 0.5), [0, 1, 0], 1) for _ in range(2)]
    with pytest.raises(ValueError):
        build_histograms(runs)


def test_full_memorizer_mi_is_log2():
    runs = memorizer_runs()
    point, _, _ = estimate_all(runs, BoundSearchCfg(bootstrap=0))
    # losses determine S, so each group's plug-in MI is the empirical entropy of its bits
    obs = flatten(runs)
    expected = 0.0
    for grp, size in ((0, obs.kl), (1, obs.n)):
        q = obs.s[obs.group == grp].mean()
        expected += size * -(q * math.log(q) + (1 - q) * math.log(1 - q))
    expected /= obs.kl + obs.n
    for key in ("mi_pair_sum", "mi_delta_sum", "mi_loss1_sum"):
        assert point[key] == pytest.approx(expected, abs=1e-12)
        assert point[key] == pytest.approx(LOG2, abs=3e-3)
    # one bit of information per cell: sqrt(2 log 2)
    assert point["e_mi"] == pytest.approx(math.sqrt(2 * LOG2), abs=2e-3)
    assert point["ld_mi"] == pytest.approx(1.1774100225154747, abs=2e-3)
    # d(0 || L/2) = -log(1 - L/2) = budget
    assert point["binary_kl"] == pytest.approx(2 * (1 - math.exp(-expected)), abs=1e-9)


def test_independent_losses_give_small_mi():
    point, se, _ = estimate_all(noise_runs(runs=2000, blocks=20), BoundSearchCfg(bootstrap=8))
    assert point["mi_pair_sum"] < 5e-3
    assert abs(point["gap"]) < 3 * se["gap"] + 1e-9


def test_estimates_are_deterministic():
    runs = noise_runs(runs=40)
    a = bounds.report(runs, BoundSearchCfg(bootstrap=16), seed=3)
    b = bounds.report(runs, BoundSearchCfg(bootstrap=16), seed=3)
    assert a.to_json() == b.to_json()


def test_sqrt_bound_from_cells():
    assert sqrt_bound_from_cells(np.full(5, LOG2), 2, 1, 3) == pytest.approx(math.sqrt(2 * LOG2))
    with pytest.raises(ValueError):
        sqrt_bound_from_cells(np.zeros(4), 2, 1, 3)


def test_binary_kl_bound():
    L_star, gap = bound_binary_kl(0.1, 0.05)
    assert L_star == pytest.approx(invert_binary_kl(0.1, 0.05))
    assert gap == pytest.approx(L_star - 0.1)
    assert bound_binary_kl(0.2, 0.0)[1] == pytest.approx(0.0, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(risk=st.floats(0, 1), a=st.floats(0, 2), b=st.floats(0, 2))
def test_fast_bound_monotone_in_information(risk, a, b):
    lo, hi = sorted((a, b))
    assert bound_fast(risk, lo)[0] <= bound_fast(risk, hi)[0] + 1e-12


def test_fast_bound_zero_and_interpolating_limit():
    assert bound_fast(0.0, 0.0)[0] == 0.0
    # with zero empirical risk the value approaches mi / (log(2)/2)
    assert bound_fast(0.0, 0.1)[0] == pytest.approx(0.2 / LOG2, rel=1e-6)


def test_fast_var_unscaled_constant_is_smaller():
    v = np.array([0.05, 0.04])
    scaled = bound_fast_var(v, (0.3, 0.6), 0.02, constant="scaled")
    unscaled = bound_fast_var(v, (0.3, 0.6), 0.02, constant="unscaled")
    assert unscaled[0] <= scaled[0]
    assert scaled[3] in (0.3, 0.6)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), gamma=st.floats(0.01, 0.99))
def test_variance_identity_for_zero_one_losses(seed, gamma):
    runs = noise_runs(runs=6, blocks=2, seed=seed)
    assert empirical_variance(runs, gamma) == pytest.approx(variance_identity(runs, gamma), abs=1e-12)


def test_sgld_bound_frozen_value():
    rows = np.array([[1.0, 1.0], [-1.0, -1.0]])
    val = bound_sgld([[rows]], lambda r: 0.1, lambda r: 0.1, 1, 1, 3)
    # Gram eigenvalue 4, so logdet = log 5
    assert val == pytest.approx(math.sqrt(math.log(5) / 16))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10 ** 6), e1=st.floats(1e-3, 1.0), e2=st.floats(1e-3, 1.0))
def test_sgld_bound_monotone(seed, e1, e2):
    g = np.random.default_rng(seed)
    logs = [[r - r.mean(0) for r in g.normal(size=(3, 4, 5))] for _ in range(2)]
    lo, hi = sorted((e1, e2))
    if hi - lo < 1e-6:
        return
    f = lambda eta, xi: bound_sgld(logs, lambda r: eta, lambda r: xi, 2, 2, 4)
    assert f(lo, 0.1) < f(hi, 0.1)
    assert f(0.1, lo) > f(0.1, hi)


def test_sgld_bound_errors():
    with pytest.raises(ValueError):
        bound_sgld([], lambda r: 1, lambda r: 1, 1, 1, 1)
    with pytest.raises(ValueError):
        bound_sgld([[np.ones((2, 2))]], lambda r: 1, lambda r: 0.0, 1, 1, 1)


def test_cmi_needs_blocks():
    runs = memorizer_runs(runs=8, blocks=1)
    point, _, _ = estimate_all(runs, BoundSearchCfg(bootstrap=0))
    assert "e_cmi" not in point
    with pytest.raises(ValueError):
        estimate_all(runs, BoundSearchCfg(bootstrap=0), with_cmi=True)


def test_interpolating_identity_on_memorizer():
    runs = memorizer_runs(runs=400, blocks=40, alpha=0.3, seed=4)
    res = check_interpolating_identity(runs, BoundSearchCfg(bootstrap=32))
    assert res["applicable"] and res["satisfied"]
    assert res["lhs"] == pytest.approx(0.3, abs=0.03)
    assert not check_interpolating_identity(noise_runs())["applicable"]


def test_every_bound_covers_gap_on_memorizer():
    rep = bounds.report(memorizer_runs(runs=400, blocks=40, alpha=0.3, seed=1), BoundSearchCfg(bootstrap=32))
    for e in rep.entries:
        assert e["value"] >= rep.gap - 2 * math.hypot(e["se"], rep.gap_se), e["name"]


def test_per_index_mode_runs():
    runs = memorizer_runs(runs=60, blocks=6, alpha=0.5)
    point, _, _ = estimate_all(runs, BoundSearchCfg(estimation_mode="per_index", bootstrap=0))
    assert 0 < point["mi_pair_sum"] <= LOG2 + 1e-12


def test_report_roundtrip_and_csv():
    rep = bounds.report(noise_runs(), BoundSearchCfg(bootstrap=8), metadata={"config_hash": "abc"})
    back = BoundReport.from_json(rep.to_json())
    assert back.to_json() == rep.to_json()
    assert [e["name"] for e in rep.entries] == list(bounds.BOUND_NAMES)
    rows = rep.csv_rows("abc")
    assert len(rows) == len(bounds.BOUND_NAMES) and rows[0][0] == "abc"
    text = bounds.reports_to_csv(rows)
    assert text.splitlines()[0].startswith("config_hash,bound")
    with pytest.raises(KeyError):
        rep.entry("missing")


def test_search_cfg_validation():
    with pytest.raises(ValueError):
        BoundSearchCfg(c2_points=0)
    with pytest.raises(ValueError):
        BoundSearchCfg(gamma_grid=(1.5,))
    with pytest.raises(ValueError):
        BoundSearchCfg(estimation_mode="other")
