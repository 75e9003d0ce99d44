import math

import numpy as np
import pytest

from reasoning_entropy import infotheory as it
from reasoning_entropy import oracle as orc
from reasoning_entropy.infotheory import ValidationError


def test_aligned_world_sia(small_world):
    eps = orc.prefix_informations(small_world)
    assert all(e > 0 for e in eps)
    assert all(b > a for a, b in zip(eps, eps[1:]))
    assert small_world.params["seed"] == 7


def test_full_revelation():
    w = orc.generate_aligned_world(1, (2, 3, 3), 2, 1.0)
    q = orc.exact_prefix_quantities(w, 1)
    assert q.information == pytest.approx(q.h_answer, abs=1e-12)
    assert q.h_answer_prefix == pytest.approx(0.0, abs=1e-12)
    assert orc.bayes_error(w, 1) == pytest.approx(0.0, abs=1e-12)


def test_generation_error_reports_epsilons():
    with pytest.raises(orc.GenerationError) as exc:
        orc.generate_aligned_world(0, (2, 2, 2), 2, 1e-5, sia_floor=1e-3)
    assert len(exc.value.epsilons) == 2


def test_generator_argument_checks():
    with pytest.raises(ValidationError):
        orc.generate_aligned_world(0, (1, 2, 2), 2)
    with pytest.raises(ValidationError):
        orc.generate_aligned_world(0, (2, 2, 2), 7)
    with pytest.raises(ValidationError):
        orc.generate_aligned_world(0, (2, 2, 2), 2, strength=0.0)
    with pytest.raises(ValidationError):
        orc.generate_aligned_world(0, (10, 10, 10), 6)


def test_elimination_code_world():
    w = orc.generate_aligned_world(2, (2, 5, 4), 3, 0.6, code="eliminate")
    eps = orc.prefix_informations(w)
    assert all(b > a for a, b in zip([0.0] + eps, eps))
    assert w.params["code"] == "eliminate"


def test_prefix_information_monotone_random(rng):
    for _ in range(10):
        j = orc.random_joint(rng, 2, 2, 3, 4)
        eps = [0.0] + orc.prefix_informations(j)
        assert all(b >= a - 1e-12 for a, b in zip(eps, eps[1:]))


def test_exact_prefix_quantities_identity(rng):
    j = orc.random_joint(rng, 3, 2, 3, 3)
    q0 = orc.exact_prefix_quantities(j, 0)
    assert q0.information == 0.0 and q0.h_answer_prefix == pytest.approx(q0.h_answer, abs=1e-15)
    for k in range(1, 4):
        q = orc.exact_prefix_quantities(j, k)
        assert abs(q.h_answer_prefix - (q.h_answer - q.information)) < 1e-12
        assert abs(sum(q.step_informations) - q.information) < 1e-12


def test_bayes_error_cases(rng):
    alph = orc.default_alphabets(1, 2, 4)
    uninformative = np.full((1, 2, 4), 1 / 8)
    w = orc.ExactJoint(*alph, 1, uninformative)
    assert orc.bayes_error(w, 1) == pytest.approx(0.75)
    for _ in range(20):
        j = orc.random_joint(rng, 2, 2, 4, 2, concentration=0.5)
        for k in range(3):
            h = it.conditional_entropy(j.table, "A", ["Q"] + j.prefix(k))
            assert orc.bayes_error(j, k) >= it.fano_error_lower_bound(h, 4) - 1e-12


def test_sample_sequences(small_world):
    assert orc.sample_sequences(small_world, 0, 1).shape == (0, 5)
    a = orc.sample_sequences(small_world, 100_000, 3)
    b = orc.sample_sequences(small_world, 100_000, 3)
    assert np.array_equal(a, b)
    counts = np.zeros(small_world.mass.shape)
    np.add.at(counts, tuple(a.T), 1)
    p = small_world.mass
    sigma = np.sqrt(len(a) * p * (1 - p))
    assert np.all(np.abs(counts - len(a) * p) <= 4 * sigma + 1e-9)


def test_mle_fit_point_mass():
    s = np.array([[0, 1, 0, 2]] * 5)
    m = orc.mle_fit(s, 0.0, sizes=(2, 2, 3))
    assert m.steps[0][0, 1] == 1.0
    assert m.steps[1][0, 1, 0] == 1.0
    assert m.answer[0, 1, 0, 2] == 1.0
    # unobserved contexts fall back to uniform
    assert np.allclose(m.answer[1, 0, 0], 1 / 3)


def test_mle_fit_smoothing_and_errors(small_world):
    m = orc.mle_fit(orc.sample_sequences(small_world, 500, 0), 0.5, small_world.sizes)
    for t in (m.q_marginal, *m.steps, m.answer):
        assert np.all(t > 0)
    m.check_rows()
    with pytest.raises(orc.FitError):
        orc.mle_fit(np.zeros((0, 5), dtype=int), 0.0, sizes=(2, 2, 4), horizon=3)
    with pytest.raises(orc.FitError):
        orc.mle_fit(np.zeros((3, 5), dtype=int), -1.0, sizes=(2, 2, 4))


def test_mle_more_data_lower_kl(small_world):
    def kl(n):
        m = orc.mle_fit(orc.sample_sequences(small_world, n, 11), 0.5, small_world.sizes)
        return it.kl_divergence(small_world.mass, m.joint())
    assert kl(100_000) < kl(1_000)


def test_transfer_exact_model(small_world):
    model = orc.TabularAutoregressiveModel.from_joint(small_world)
    for k in (1, 2, 3):
        rep = orc.transfer_check(small_world, model, k)
        assert rep.kl_joint == pytest.approx(0.0, abs=1e-12)
        assert rep.i_model == pytest.approx(rep.i_r, abs=1e-12)
        assert rep.half_epsilon_satisfied and rep.within_bound


def test_transfer_large_fit(small_world):
    m = orc.mle_fit(orc.sample_sequences(small_world, 100_000, 5), 0.5, small_world.sizes)
    for k in (1, 2, 3):
        rep = orc.transfer_check(small_world, m, k)
        assert rep.half_epsilon_satisfied
        assert rep.bound_valid and rep.within_bound


def test_transfer_tiny_fit_bound_holds_when_finite(small_world):
    m = orc.mle_fit(orc.sample_sequences(small_world, 10, 5), 0.5, small_world.sizes)
    for k in (1, 2, 3):
        rep = orc.transfer_check(small_world, m, k)
        if rep.bound_valid:
            assert rep.gap <= rep.continuity_bound
        assert rep.within_bound


def test_transfer_unsmoothed_fit_has_invalid_bound(small_world):
    m = orc.mle_fit(orc.sample_sequences(small_world, 20, 5), 0.0, small_world.sizes)
    rep = orc.transfer_check(small_world, m, 1)
    assert rep.kl_joint == math.inf and not rep.bound_valid


def test_transfer_delta_shrinks_with_n():
    w = orc.generate_aligned_world(2, (2, 2, 4), 3, 0.5)
    deltas = []
    for n in (100, 1_000, 10_000, 100_000):
        m = orc.mle_fit(orc.sample_sequences(w, n, 2), 0.5, w.sizes)
        deltas.append(orc.transfer_check(w, m, 3).kl_joint)
    assert all(b <= a for a, b in zip(deltas, deltas[1:]))


def test_transfer_alphabet_mismatch(small_world):
    other = orc.generate_aligned_world(0, (2, 3, 4), 3)
    with pytest.raises(ValidationError):
        orc.transfer_check(small_world, orc.TabularAutoregressiveModel.from_joint(other), 1)


def test_misaligned_signature():
    mw = orc.generate_misaligned_world(7, (2, 2, 4), 3)
    for k in (1, 2, 3):
        assert orc.exact_prefix_quantities(mw.truth, k).information < 1e-12
    internal = mw.hallucinator.as_exact_joint()
    h = [orc.exact_prefix_quantities(internal, k).h_answer_prefix for k in range(4)]
    assert all(b < a for a, b in zip(h, h[1:]))
    # the truth shares the hallucinator's trace distribution
    tr = mw.truth.table.marginal(["Q", "C1", "C2", "C3"])
    hr = internal.table.marginal(["Q", "C1", "C2", "C3"])
    assert np.allclose(tr, hr)


def test_model_posterior_matches_joint(small_world):
    model = orc.TabularAutoregressiveModel.from_joint(small_world)
    for k in range(4):
        assert np.allclose(model.answer_posterior(k), small_world.posterior(k))


def test_world_round_trip(tmp_path, small_world):
    p = tmp_path / "w.json"
    orc.save_world(p, small_world)
    back = orc.load_world(p)
    assert np.array_equal(back.mass, small_world.mass)
    assert back.params == small_world.params
    regenerated = orc.generate_world(small_world.params)
    assert np.array_equal(regenerated.mass, small_world.mass)
    doc = small_world.to_dict()
    doc["schema"] = "world.v0"
    with pytest.raises(ValidationError):
        orc.ExactJoint.from_dict(doc)
