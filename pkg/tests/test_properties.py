"""Property-based checks with hypothesis."""

import math

import numpy as np
from _helpers import make_traj
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from reasoning_entropy import diagnostics as dg
from reasoning_entropy import infotheory as it
from reasoning_entropy.infotheory import JointTable
from reasoning_entropy.rollout import plan_checkpoints, shuffle_prefix
from reasoning_entropy.traces import (NULL, AnswerLabel, empirical_distribution, normalize_letter,
                                      normalize_numeric)

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@st.composite
def dists(draw, n=None, min_size=2, max_size=6):
    n = n or draw(st.integers(min_size, max_size))
    w = draw(st.lists(st.floats(0.0, 10.0), min_size=n, max_size=n))
    assume(sum(w) > 1e-3)
    p = np.array(w) / sum(w)
    return p / p.sum()


@st.composite
def dist_pairs(draw):
    n = draw(st.integers(2, 6))
    return draw(dists(n)), draw(dists(n))


@st.composite
def joints(draw):
    shape = tuple(draw(st.integers(1, 3)) for _ in range(3))
    p = draw(dists(int(np.prod(shape)), min_size=1))
    return JointTable(("X", "Y", "Z"), p.reshape(shape))


@given(dists())
def test_entropy_bounds(p):
    h = it.entropy(p)
    assert -1e-12 <= h <= math.log(len(p)) + 1e-12


@given(joints())
def test_information_nonnegative_and_chain_rule(j):
    assert it.mutual_information(j, "X", "Y") >= -1e-12
    assert it.conditional_mutual_information(j, "X", "Y", "Z") >= -1e-12
    assert it.conditional_entropy(j, "X", "Y") <= it.entropy(j.marginal(["X"])) + 1e-12
    lhs = it.mutual_information(j, "X", ["Y", "Z"])
    rhs = it.mutual_information(j, "X", "Z") + it.conditional_mutual_information(j, "X", "Y", "Z")
    assert abs(lhs - rhs) < 1e-12


@given(dist_pairs())
def test_kl_pinsker_and_continuity_dominate(pq):
    p, q = pq
    kl = it.kl_divergence(p, q)
    assert kl >= -1e-15
    if math.isfinite(kl):
        assert it.total_variation(p, q) <= it.pinsker_tv_bound(kl) + 1e-12
        b = it.entropy_continuity_bound(kl, len(p))
        if math.isfinite(b):
            assert abs(it.entropy(p) - it.entropy(q)) <= b + 1e-12


@given(dist_pairs())
def test_cross_entropy_identity(pq):
    p, q = pq
    parts = it.cross_entropy_decomposition(p, q)
    if math.isfinite(parts.cross_entropy):
        assert abs(parts.cross_entropy - parts.entropy_r - parts.kl) < 1e-12


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric(x):
    assert abs(it.binary_entropy(x) - it.binary_entropy(1 - x)) < 1e-12


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12), st.floats(0.1, 10), st.floats(-10, 10),
       st.floats(0.1, 10), st.floats(-10, 10))
def test_rho_affine_invariance(h, a, b, c, d):
    rng = np.random.default_rng(len(h))
    s = np.asarray(h) + rng.normal(size=len(h))
    base = dg.sia_alignment(make_traj(h, s))
    moved = dg.sia_alignment(make_traj(a * np.asarray(h) + b, c * s + d))
    assert base.defined == moved.defined
    if base.defined and abs(base.rho) < 1 - 1e-6:
        assert abs(base.rho - moved.rho) < 1e-6


scores = st.lists(st.integers(-30, 30).map(lambda i: i / 10), min_size=1, max_size=8)


@given(scores, scores)
def test_auc_monotone_invariance_and_range(pos, neg):
    auc = dg.mann_whitney_auc(pos, neg)
    assert 0.0 <= auc <= 1.0
    assert math.isclose(auc, dg.mann_whitney_auc(np.exp(pos), np.exp(neg)), abs_tol=1e-12)
    assert math.isclose(auc, 1 - dg.mann_whitney_auc(neg, pos), abs_tol=1e-12)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.integers(0, 100))
def test_bootstrap_brackets_mean(vals, seed):
    lo, hi = dg.bootstrap_ci(vals, B=100, seed=seed)
    m = float(np.mean(vals))
    assert lo - 1e-9 <= m <= hi + 1e-9


@given(st.text(alphabet="0123456789,.-$ abc", max_size=12))
def test_normalize_numeric_idempotent(text):
    lab = normalize_numeric(text)
    if not lab.is_null:
        assert normalize_numeric(lab.value) == lab


@given(st.text(max_size=5))
def test_normalize_letter_idempotent(text):
    lab = normalize_letter(text)
    if not lab.is_null:
        assert normalize_letter(lab.value) == lab


labels = st.sampled_from([AnswerLabel("numeric", str(i)) for i in range(5)] + [NULL])


@given(st.lists(labels, min_size=1, max_size=40), st.floats(0, 2), labels)
def test_smoothed_masses_sum_to_one(ls, alpha, gold):
    d = empirical_distribution(ls, alpha, gold)
    assert abs(sum(d.masses()) - 1.0) < 1e-12
    assert -1e-12 <= d.entropy() <= math.log(len(d.support)) + 1e-12


@given(st.lists(st.text(max_size=3), max_size=20), st.data())
def test_shuffle_prefix_preserves_multiset(tokens, data):
    k = data.draw(st.integers(0, len(tokens)))
    seed = data.draw(st.integers(0, 2 ** 32))
    out = shuffle_prefix(tokens, k, seed)
    assert sorted(out) == sorted(tokens[:k])
    assert out == shuffle_prefix(tokens, k, seed)


@given(st.integers(0, 5000), st.one_of(st.none(), st.integers(1, 400)))
def test_checkpoints_cover_endpoints(k, stride):
    pos = plan_checkpoints(k, stride).positions
    assert pos[0] == 0 and pos[-1] == k
    assert all(b > a for a, b in zip(pos, pos[1:]))
    if stride is None and k >= 20:
        assert 21 <= len(pos) <= 40
