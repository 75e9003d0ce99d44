import math

import numpy as np
import pytest
from _helpers import make_traj

from reasoning_entropy import diagnostics as dg

# frozen from scripts/derive_oracles.py
AUC_HAND_SET = 1.0


def test_rho_examples():
    assert dg.sia_alignment(make_traj([3, 2, 1], [3, 2, 1])).rho == pytest.approx(1.0)
    assert dg.sia_alignment(make_traj([1, 2, 3], [3, 2, 1])).rho == pytest.approx(-1.0)
    r = dg.sia_alignment(make_traj([1, 1, 1], [3, 2, 1]))
    assert not r.defined and r.degenerate_reason == "constant_entropy"
    r = dg.sia_alignment(make_traj([3, 2, 1], [2, 2, 2]))
    assert r.degenerate_reason == "constant_surprisal"
    assert dg.sia_alignment(make_traj([1, 0])).degenerate_reason == "too_few_points"


def test_rho_excludes_infinite_surprisal():
    r = dg.sia_alignment(make_traj([4, 3, 2, 1], [math.inf, 3, 2, 1]))
    assert r.n_excluded == 1 and r.n_checkpoints == 3 and r.rho == pytest.approx(1.0)
    r = dg.sia_alignment(make_traj([3, 2, 1], [math.inf, 2, 1]))
    assert r.degenerate_reason == "too_few_points"


def test_rho_spearman_and_unknown():
    t = make_traj([1, 2, 3, 4], [1, 4, 9, 100])
    assert dg.sia_alignment(t, "spearman").rho == pytest.approx(1.0)
    assert dg.sia_alignment(t).rho < 1.0
    with pytest.raises(ValueError):
        dg.sia_alignment(t, "kendall")


def test_aggregate_alignment():
    rs = [dg.sia_alignment(make_traj([3, 2, 1], qid=f"q{i}")) for i in range(4)]
    (row,) = dg.aggregate_alignment(rs, B=200)
    assert row.mean_rho == pytest.approx(1.0) and row.count == 4 and row.n_undefined == 0
    mixed = [dg.sia_alignment(make_traj([3, 2, 1], qid="a")), dg.sia_alignment(make_traj([1, 2, 3], [3, 2, 1], qid="b")),
             dg.sia_alignment(make_traj([1, 1, 1], qid="c"))]
    (row,) = dg.aggregate_alignment(mixed, B=200)
    assert row.mean_rho == pytest.approx(0.0, abs=1e-12) and row.count == 2 and row.n_undefined == 1
    assert row.ci_low <= 0 <= row.ci_high
    only_bad = [dg.sia_alignment(make_traj([1, 1, 1], group=("x", "y")))]
    assert dg.aggregate_alignment(only_bad) == []


def test_aggregate_groups_sorted():
    rs = [dg.sia_alignment(make_traj([3, 2, 1], group=g)) for g in [("b", "d"), ("a", "d"), ("a", "c")]]
    assert [(r.model_tag, r.dataset_tag) for r in dg.aggregate_alignment(rs, B=10)] == \
        [("a", "c"), ("a", "d"), ("b", "d")]


def test_bootstrap_ci_examples():
    assert dg.bootstrap_ci([2.0] * 10) == (2.0, 2.0)
    assert dg.bootstrap_ci([5.0]) == (5.0, 5.0)
    assert all(math.isnan(v) for v in dg.bootstrap_ci([]))
    x = np.array([1.0, -1.0] * 50)
    lo, hi = dg.bootstrap_ci(x, B=1000, seed=0)
    assert lo < 0 < hi
    v = np.random.default_rng(1).normal(size=40)
    lo, hi = dg.bootstrap_ci(v, seed=3)
    assert lo <= v.mean() <= hi
    assert dg.bootstrap_ci(v, seed=3) == (lo, hi)


def test_bootstrap_clustered():
    vals = [1.0, 1.0, 3.0, 3.0]
    lo, hi = dg.bootstrap_ci(vals, B=500, clusters=["a", "a", "b", "b"])
    assert 1.0 <= lo <= hi <= 3.0
    assert dg.bootstrap_ci(vals, clusters=["a"] * 4) == (2.0, 2.0)


def test_entropy_at_interpolates():
    t = make_traj([2.0, 1.0, 0.0], positions=[0, 5, 10])
    assert dg.entropy_at(t, 0.25) == pytest.approx(1.5)
    assert np.allclose(dg.entropy_at(t, [0.0, 1.0]), [2.0, 0.0])
    assert dg.entropy_at(make_traj([0.7], positions=[0]), 0.5) == 0.7


def test_gain_curve_examples():
    t = make_traj(np.linspace(math.log(4), 0, 11), positions=range(0, 101, 10))
    g = dg.normalized_gain(t)
    assert g[0] == pytest.approx(0.0) and g[-1] == pytest.approx(1.0)
    assert np.all(np.diff(g) >= -1e-12)
    assert dg.normalized_gain(make_traj([1.0] * 5)) is None
    curve = dg.gain_curve([t, make_traj([1.0] * 5, correct=False)], B=50)
    assert curve.excluded == 1 and curve.counts == {"correct": 1, "incorrect": 0}
    assert all(math.isnan(v) for v in curve.mean["incorrect"])
    assert dg.gain_curve([make_traj([1.0] * 3)], B=10).diagnostic == "all trajectories excluded"


def test_auc_examples():
    assert dg.mann_whitney_auc([3, 4], [1, 2]) == 1.0
    assert dg.mann_whitney_auc([1, 1], [1, 1]) == 0.5
    assert math.isnan(dg.mann_whitney_auc([], [1]))
    trajs = [make_traj([h, h], correct=True, idx=i) for i, h in enumerate([0.1, 0.2])]
    trajs += [make_traj([h, h], correct=False, idx=i + 2) for i, h in enumerate([0.3, 0.4])]
    assert dg.auc_at_prefix(trajs, 0.5) == (AUC_HAND_SET, 2, 2)
    auc, n1, n0 = dg.auc_at_prefix(trajs[:2], 0.5)
    assert math.isnan(auc) and (n1, n0) == (2, 0)


def test_separability_curve():
    trajs = [make_traj([1.0, 0.1 * i], correct=True, qid=f"q{i}", idx=0) for i in range(4)]
    trajs += [make_traj([1.0, 0.8 + 0.1 * i], correct=False, qid=f"q{i}", idx=1) for i in range(4)]
    sc = dg.separability_curve(trajs, B=100)
    assert sc.auc[0] == 0.5 and sc.auc[-1] == 1.0
    assert (sc.n_correct, sc.n_incorrect) == (4, 4)
    assert len(sc.ci_low) == len(dg.GRID)


def test_saturation_examples():
    tau = dg.SATURATION_TAU
    r = dg.saturation_detect(make_traj([2.0, 1.0, 0.5, 0.5, 0.5, 0.5]))
    assert r.plateau_detected and r.onset == 2 and r.plateau_level == pytest.approx(0.5)
    r = dg.saturation_detect(make_traj([1 - 2 * tau * i for i in range(6)]))
    assert not r.plateau_detected and not r.insufficient
    assert dg.saturation_detect(make_traj([1.0, 0.5])).insufficient
    r = dg.saturation_detect(make_traj([1.0, 0.6, 0.6, 0.6, 1.2]))
    assert r.plateau_detected and r.rebound_detected


def test_paired_alignment():
    orig = [make_traj([3, 2, 1], qid=f"q{i}") for i in range(3)]
    abl = [make_traj([1, 2, 3], [3, 2, 1], qid=f"q{i}") for i in range(3)]
    (row,) = dg.paired_alignment(orig, abl)
    assert row.original_mean_rho == pytest.approx(1.0) and row.ablated_mean_rho == pytest.approx(-1.0)
    assert (row.original_count, row.ablated_count) == (3, 3)


def test_mean_entropy_curve():
    a, b = make_traj([2.0, 0.0]), make_traj([0.0, 0.0])
    c = dg.mean_entropy_curve([a, b])
    assert c[0] == pytest.approx(1.0) and c[-1] == pytest.approx(0.0)
    assert all(math.isnan(v) for v in dg.mean_entropy_curve([]))


@pytest.mark.slow
def test_end_to_end_gain_and_plateau_on_oracle_worlds():
    from reasoning_entropy.battery import BatteryConfig, run_battery
    # a weaker code than the default preset so that incorrect traces are common
    hard = run_battery(BatteryConfig("aligned", world_overrides={"strength": 0.2}))
    g = dg.gain_curve(hard.original, B=100)
    i = dg.GRID.index(0.5)
    assert g.counts["incorrect"] >= 10
    assert g.mean["correct"][i] > g.mean["incorrect"][i]
    mis = run_battery(BatteryConfig("misaligned"))
    rate, level = mis.plateau()
    assert rate > 0.3 and level > 0.3
