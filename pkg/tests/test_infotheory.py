import math

import numpy as np
import pytest

from reasoning_entropy import infotheory as it
from reasoning_entropy.infotheory import DomainError, JointTable, ProbDist, ValidationError

# Reference values from scripts/derive_oracles.py
H_HALF_QUARTERS = 1.0397207708399179
H_Y_GIVEN_X_2X2 = 0.5004024235381879
MI_2X2 = 0.19274475702175753
F_M4_D002 = 0.4349442022582592
F_M2_D002 = 0.3250829733914482
FANO_LN4_M4 = 0.6309297535714574

XY = JointTable(("X", "Y"), [[0.4, 0.1], [0.1, 0.4]])


def test_entropy_examples():
    assert it.entropy(ProbDist.uniform(4)) == pytest.approx(math.log(4), abs=1e-12)
    assert it.entropy([0.0, 1.0, 0.0]) == 0.0
    assert it.entropy([0.5, 0.25, 0.25]) == pytest.approx(H_HALF_QUARTERS, abs=1e-12)


def test_entropy_point_mass_is_positive_zero():
    assert math.copysign(1.0, it.entropy([1.0])) == 1.0


def test_invalid_mass_rejected():
    with pytest.raises(ValidationError):
        ProbDist([0.5, 0.5 + 2e-9])
    with pytest.raises(ValidationError):
        ProbDist([1.2, -0.2])
    ProbDist([0.5, 0.5 + 5e-10])


def test_prob_dist_is_read_only():
    d = ProbDist([0.5, 0.5])
    with pytest.raises(ValueError):
        d.mass[0] = 1.0


def test_conditional_entropy_examples():
    assert it.conditional_entropy(XY, "Y", "X") == pytest.approx(H_Y_GIVEN_X_2X2, abs=1e-12)
    indep = JointTable(("X", "Y"), np.outer([0.3, 0.7], [0.2, 0.8]))
    assert it.conditional_entropy(indep, "Y", "X") == pytest.approx(it.entropy([0.2, 0.8]), abs=1e-12)
    func = JointTable(("X", "Y"), [[0.3, 0.0], [0.0, 0.7]])
    assert it.conditional_entropy(func, "Y", "X") == 0.0


def test_conditional_entropy_axis_errors():
    with pytest.raises(ValidationError):
        it.conditional_entropy(XY, "Y", ["Y"])
    with pytest.raises(ValidationError):
        it.conditional_entropy(XY, "Z", "X")


def test_mutual_information_examples():
    assert it.mutual_information(XY, "X", "Y") == pytest.approx(MI_2X2, abs=1e-12)
    assert it.mutual_information(XY, "Y", "X") == pytest.approx(MI_2X2, abs=1e-12)
    copy = JointTable(("X", "Y"), [[0.5, 0.0], [0.0, 0.5]])
    assert it.mutual_information(copy, "X", "Y") == pytest.approx(math.log(2), abs=1e-12)
    indep = JointTable(("X", "Y"), np.outer([0.3, 0.7], [0.2, 0.8]))
    assert abs(it.mutual_information(indep, "X", "Y")) < 1e-12


def test_cmi_markov_chain_is_zero(rng):
    # A -> G -> B
    pa = rng.dirichlet(np.ones(3))
    g_a = rng.dirichlet(np.ones(2), size=3)
    b_g = rng.dirichlet(np.ones(4), size=2)
    mass = pa[:, None, None] * g_a[:, :, None] * b_g[None, :, :]
    j = JointTable(("A", "G", "B"), mass)
    assert abs(it.conditional_mutual_information(j, "A", "B", "G")) < 1e-12
    with pytest.raises(ValidationError):
        it.conditional_mutual_information(j, "A", ["A"], "G")


def test_cmi_chain_rule_random_three_step(rng):
    mass = rng.dirichlet(np.ones(2 * 2 * 2 * 2 * 3)).reshape(2, 2, 2, 2, 3)
    j = JointTable(("Q", "C1", "C2", "C3", "A"), mass)
    pre = ["C1", "C2", "C3"]
    steps = sum(it.conditional_mutual_information(j, "A", [pre[t]], ["Q"] + pre[:t]) for t in range(3))
    assert abs(steps - it.conditional_mutual_information(j, "A", pre, "Q")) < 1e-12


def test_kl_examples():
    assert it.kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert it.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    assert it.kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
    with pytest.raises(ValidationError):
        it.kl_divergence([1.0], [0.5, 0.5])


def test_total_variation_examples():
    assert it.total_variation([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert it.total_variation([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert it.total_variation([0.7, 0.3], [0.5, 0.5]) == pytest.approx(0.2, abs=1e-15)


def test_surprisal_and_gains():
    assert it.pointwise_surprisal(ProbDist([1.0, 0.0]), 0) == 0.0
    assert it.pointwise_surprisal(ProbDist([1 / math.e, 1 - 1 / math.e]), 0) == pytest.approx(1.0)
    assert it.pointwise_surprisal(ProbDist([1.0, 0.0]), 1) == math.inf
    with pytest.raises(ValidationError):
        it.pointwise_surprisal(ProbDist([1.0, 0.0]), 2)
    d = lambda m: ProbDist([m, 1 - m])
    assert it.stepwise_gain(d(0.25), d(0.5), 0) == pytest.approx(math.log(2))
    assert it.stepwise_gain(d(0.3), d(0.3), 0) == 0.0
    assert it.stepwise_gain(d(0.5), d(0.25), 0) == pytest.approx(-math.log(2))
    assert it.is_undefined(it.stepwise_gain(d(0.0), d(0.0), 0))


def test_labelled_outcomes():
    d = ProbDist([0.25, 0.75], labels=("yes", "no"))
    assert it.pointwise_surprisal(d, "no") == pytest.approx(-math.log(0.75))


def test_cumulative_gain():
    d = lambda m: ProbDist([m, 1 - m])
    assert it.cumulative_gain([d(0.4)] * 3, 0) == [0.0, 0.0, 0.0]
    g = it.cumulative_gain([d(0.25), d(0.5), d(1.0)], 0)
    assert g == pytest.approx([0.0, math.log(2), 2 * math.log(2)], abs=1e-12)
    post = [d(m) for m in (0.1, 0.3, 0.2, 0.9)]
    g = it.cumulative_gain(post, 0)
    assert abs(g[-1] - (it.pointwise_surprisal(post[0], 0) - it.pointwise_surprisal(post[-1], 0))) < 1e-12


def test_binary_entropy_and_pinsker():
    assert it.binary_entropy(0.0) == 0.0
    assert it.binary_entropy(0.5) == pytest.approx(math.log(2))
    assert it.binary_entropy(0.2) == pytest.approx(it.binary_entropy(0.8))
    assert it.pinsker_tv_bound(0.0) == 0.0
    assert it.pinsker_tv_bound(0.5) == 0.5


def test_entropy_continuity_bound_values():
    assert it.entropy_continuity_bound(0.0, 4) == 0.0
    # 0.4355 is often quoted for this point; direct evaluation gives 0.434944
    assert it.entropy_continuity_bound(0.02, 4) == pytest.approx(F_M4_D002, abs=1e-12)
    assert it.entropy_continuity_bound(0.02, 2) == pytest.approx(F_M2_D002, abs=1e-12)
    assert it.entropy_continuity_bound(1.0, 1) == 0.0


def test_entropy_continuity_validity_edge():
    # sqrt(delta/2) must not exceed 1 - 1/m
    assert it.entropy_continuity_valid(2 * 0.75**2, 4)
    assert not it.entropy_continuity_valid(2 * 0.76**2, 4)
    assert it.entropy_continuity_bound(2 * 0.76**2, 4) == math.inf
    assert it.entropy_continuity_bound(math.inf, 3) == math.inf


def test_entropy_continuity_monotone():
    deltas = np.linspace(0, 0.5, 50)
    vals = [it.entropy_continuity_bound(d, 5) for d in deltas]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_composed_bounds():
    assert it.cond_entropy_continuity_bound(0.0, 2, 2) == 0.0
    assert it.cond_entropy_continuity_bound(0.02, 2, 2) == pytest.approx(F_M4_D002 + F_M2_D002, abs=1e-12)
    assert it.cmi_continuity_bound(0.0, 2, 4, 3) == 0.0
    d = 0.01
    expect = it.cond_entropy_continuity_bound(d, 2, 3) + it.cond_entropy_continuity_bound(d, 8, 3)
    assert it.cmi_continuity_bound(d, 2, 4, 3) == pytest.approx(expect, abs=1e-15)


def test_fano():
    assert it.fano_error_lower_bound(math.log(2), 5) == 0.0
    assert it.fano_error_lower_bound(math.log(4), 4) == pytest.approx(FANO_LN4_M4, abs=1e-12)
    with pytest.raises(DomainError):
        it.fano_error_lower_bound(0.5, 2)
    for m in (3, 4, 7):
        assert it.fano_error_lower_bound(math.log(m), m) <= 1.0


def test_cross_entropy_decomposition():
    r = [0.2, 0.3, 0.5]
    parts = it.cross_entropy_decomposition(r, r)
    assert parts.cross_entropy == pytest.approx(it.entropy(r), abs=1e-15)
    assert parts.kl == 0.0
    parts = it.cross_entropy_decomposition([1.0, 0.0], [0.5, 0.5])
    assert parts == pytest.approx((math.log(2), 0.0, math.log(2)))
    parts = it.cross_entropy_decomposition([0.5, 0.5], [1.0, 0.0])
    assert parts.cross_entropy == math.inf and parts.kl == math.inf


def test_kl_chain_decomposition(rng):
    axes = ("Q", "C1", "A")
    r = JointTable(axes, rng.dirichlet(np.ones(8)).reshape(2, 2, 2))
    p = JointTable(axes, rng.dirichlet(np.ones(8)).reshape(2, 2, 2))
    parts = it.kl_chain_decomposition(r, p, ["C1"], "A", "Q")
    assert abs(parts.joint_kl - parts.marginal_kl - parts.expected_conditional_kl) < 1e-12
    same = it.kl_chain_decomposition(r, r, ["C1"], "A", "Q")
    assert same == (0.0, 0.0, 0.0)


def test_kl_chain_parts_never_exceed_joint(rng):
    axes = ("Q", "C1", "C2", "A")
    for _ in range(1000):
        r = JointTable(axes, rng.dirichlet(np.full(16, 0.7)).reshape(2, 2, 2, 2))
        p = JointTable(axes, rng.dirichlet(np.full(16, 0.7)).reshape(2, 2, 2, 2))
        parts = it.kl_chain_decomposition(r, p, ["C1", "C2"], "A", "Q")
        assert parts.marginal_kl >= -1e-12 and parts.expected_conditional_kl >= -1e-12
        assert parts.marginal_kl <= parts.joint_kl + 1e-12
        assert parts.expected_conditional_kl <= parts.joint_kl + 1e-12


def test_kl_chain_skips_zero_mass_question(rng):
    axes = ("Q", "C1", "A")
    m = rng.dirichlet(np.ones(8)).reshape(2, 2, 2)
    m[1] = 0.0
    r = JointTable(axes, m / m.sum())
    p = JointTable(axes, rng.dirichlet(np.ones(8)).reshape(2, 2, 2))
    parts = it.kl_chain_decomposition(r, p, ["C1"], "A", "Q")
    assert abs(parts.joint_kl - parts.marginal_kl - parts.expected_conditional_kl) < 1e-12


def test_joint_table_marginal_order():
    m = np.arange(24, dtype=float).reshape(2, 3, 4)
    j = JointTable(("A", "B", "C"), m / m.sum())
    assert j.marginal(["C", "A"]).shape == (4, 2)
    assert np.allclose(j.marginal(["C", "A"]), j.marginal(["A", "C"]).T)


def test_cell_cap():
    with pytest.raises(ValidationError):
        JointTable(("A",), np.full(11, 1 / 11), max_cells=10)


def test_data_processing_for_kl(rng):
    for _ in range(200):
        p = rng.dirichlet(np.ones(12)).reshape(3, 4)
        q = rng.dirichlet(np.ones(12)).reshape(3, 4)
        assert it.kl_divergence(p.sum(axis=1), q.sum(axis=1)) <= it.kl_divergence(p, q) + 1e-12
