"""Numerical verification of the identities and bounds on enumerated worlds.

Every check returns a ``CheckResult`` carrying the worst residual (for
identities) or the smallest margin (for bounds) over its battery.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import infotheory as it
from . import oracle as orc

IDENTITY_TOL = it.IDENTITY_TOL


@dataclass
class CheckResult:
    name: str
    passed: bool
    statistic: str          # "max_residual" or "min_margin" or "max_z"
    value: float
    trials: int
    seconds: float = 0.0
    detail: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = "".join(f" {k}={v}" for k, v in self.detail.items())
        return f"{status}  {self.name:<34} {self.statistic}={self.value:.3e} trials={self.trials}{extra}"

    def lines(self) -> list[str]:
        return [self.line()] + [f"      {n}" for n in self.notes]


@dataclass
class VerifyConfig:
    seed: int = 0
    n_joints: int = 24
    n_pairs: int = 1000
    mc_samples: int = 100_000
    transfer_seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    transfer_samples: int = 100_000
    transfer_alpha: float = 0.5
    world_sizes: tuple[int, int, int] = (2, 2, 4)
    world_horizon: int = 3


def _timed(fn: Callable[[], CheckResult]) -> CheckResult:
    t0 = time.perf_counter()
    res = fn()
    res.seconds = time.perf_counter() - t0
    return res


def random_joints(n: int, seed: int) -> list[orc.ExactJoint]:
    """Small dense worlds of varied shape; always full support."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        nq, nc, na = int(rng.integers(2, 4)), int(rng.integers(2, 4)), int(rng.integers(2, 5))
        k = int(rng.integers(1, 4))
        out.append(orc.random_joint(rng, nq, nc, na, k, concentration=float(rng.choice([0.5, 1.0, 3.0]))))
    return out


# -- identities -------------------------------------------------------------------

def _direct_cmi(j: orc.ExactJoint, k: int) -> float:
    """I(A; C<=k | Q) from its log-ratio definition, independent of the entropy code."""
    m = j.table.marginal(["Q"] + j.prefix(k) + ["A"])
    lead = tuple(range(1, m.ndim - 1))
    pq = m.sum(axis=tuple(range(1, m.ndim)), keepdims=True)
    pqc = m.sum(axis=-1, keepdims=True)
    pqa = m.sum(axis=lead, keepdims=True)
    nz = m > 0
    ratio = (m * pq) / (pqc * pqa)
    return float((m[nz] * np.log(ratio[nz])).sum())


def check_telescoping(joints: Sequence[orc.ExactJoint]) -> CheckResult:
    """H(A|Q,C<=k) = H(A|Q) - sum_t I(A;C_t|Q,C<t) = H(A|Q) - I(A;C<=k|Q)."""
    worst, n = 0.0, 0
    for j in joints:
        for k in range(1, j.horizon + 1):
            pq = orc.exact_prefix_quantities(j, k)
            s = sum(pq.step_informations)
            direct = _direct_cmi(j, k)
            worst = max(worst, abs(pq.h_answer_prefix - (pq.h_answer - s)),
                        abs(pq.h_answer_prefix - (pq.h_answer - direct)), abs(s - direct))
            n += 1
    return CheckResult("telescoping", worst < IDENTITY_TOL, "max_residual", worst, n)


def check_expected_gain_exact(joints: Sequence[orc.ExactJoint]) -> CheckResult:
    """Sum over the joint of r(x) Delta_k(x) equals I(A; C_k | Q, C<k)."""
    worst, n = 0.0, 0
    for j in joints:
        for k in range(1, j.horizon + 1):
            before, after = j.posterior(k - 1), j.posterior(k)
            pad = (j.horizon - k)
            la = np.log(after).reshape(after.shape[:-1] + (1,) * pad + after.shape[-1:])
            lb = np.log(before).reshape(before.shape[:-1] + (1,) * (pad + 1) + before.shape[-1:])
            expect = float((j.mass * (la - lb)).sum())
            target = orc.exact_prefix_quantities(j, k).step_informations[-1]
            worst = max(worst, abs(expect - target))
            n += 1
    return CheckResult("expected_gain_exact", worst < IDENTITY_TOL, "max_residual", worst, n)


def check_expected_gain_mc(joints: Sequence[orc.ExactJoint], n_samples: int, seed: int,
                           z_max: float = 3.0) -> CheckResult:
    """Monte-Carlo mean of Delta_k within z_max standard errors of the exact value."""
    worst, n = 0.0, 0
    for w, j in enumerate(joints):
        samples = orc.sample_sequences(j, n_samples, seed + w)
        for k in range(1, j.horizon + 1):
            d = orc.pointwise_gains(j, samples, k)
            target = orc.exact_prefix_quantities(j, k).step_informations[-1]
            se = d.std(ddof=1) / math.sqrt(len(d))
            z = abs(d.mean() - target) / se if se > 0 else 0.0
            worst = max(worst, z)
            n += 1
    return CheckResult("expected_gain_monte_carlo", worst <= z_max, "max_z", worst, n,
                       detail={"samples": n_samples})


def check_cross_entropy(joints: Sequence[orc.ExactJoint], seed: int) -> CheckResult:
    """E_r[-log p] = H(r) + KL(r || p)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in joints:
        p = rng.dirichlet(np.ones(j.mass.size)).reshape(j.mass.shape)
        parts = it.cross_entropy_decomposition(j.mass, p)
        worst = max(worst, abs(parts.cross_entropy - parts.entropy_r - parts.kl))
    return CheckResult("cross_entropy_decomposition", worst < IDENTITY_TOL, "max_residual", worst, len(joints))


def check_kl_chain(joints: Sequence[orc.ExactJoint], seed: int) -> CheckResult:
    """KL of (C, A | Q) splits into the prefix term and the expected answer term."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for j in joints:
        p = it.JointTable(j.table.axes, rng.dirichlet(np.ones(j.mass.size)).reshape(j.mass.shape))
        parts = it.kl_chain_decomposition(j.table, p, j.prefix_axes, "A", "Q")
        worst = max(worst, abs(parts.joint_kl - parts.marginal_kl - parts.expected_conditional_kl))
    return CheckResult("kl_chain_decomposition", worst < IDENTITY_TOL, "max_residual", worst, len(joints))


# -- bounds ------------------------------------------------------------------------

def check_fano(seed: int, per_size: int = 8) -> CheckResult:
    """Bayes error dominates the Fano bound at every prefix for |A| in {3, 4, 5}."""
    rng = np.random.default_rng(seed)
    margins, n, violations, notes = [], 0, 0, []
    for na in (3, 4, 5):
        for w in range(per_size):
            if w % 2:
                j = orc.generate_aligned_world(int(rng.integers(1 << 30)), (2, 3, na), 3, 0.5)
            else:
                j = orc.random_joint(rng, 2, 2, na, 3, concentration=float(rng.choice([0.3, 1.0])))
            world = []
            for k in range(0, j.horizon + 1):
                h = it.conditional_entropy(j.table, "A", ["Q"] + j.prefix(k))
                world.append(orc.bayes_error(j, k) - it.fano_error_lower_bound(h, na))
            margins += world
            violations += sum(m < -IDENTITY_TOL for m in world)
            n += len(world)
            kind = "aligned" if w % 2 else "random"
            notes.append(f"|A|={na} world {w} ({kind}): margins by k " + " ".join(f"{m:.4f}" for m in world))
    return CheckResult("fano_bound", violations == 0, "min_margin", min(margins), n,
                       detail={"violations": violations}, notes=notes)


def _pairs(rng: np.random.Generator, m: int, n: int):
    """Distribution pairs ranging from near-identical to unrelated."""
    for _ in range(n):
        p = rng.dirichlet(np.full(m, float(rng.choice([0.3, 1.0, 5.0]))))
        r = rng.dirichlet(np.ones(m))
        t = float(10 ** rng.uniform(-4, 0))
        yield p, (1 - t) * p + t * r


def check_pinsker(seed: int, n: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, bad = math.inf, 0
    for _ in range(n):
        m = int(rng.integers(2, 9))
        p, q = next(_pairs(rng, m, 1))
        margin = it.pinsker_tv_bound(it.kl_divergence(p, q)) - it.total_variation(p, q)
        worst = min(worst, margin)
        bad += margin < -IDENTITY_TOL
    return CheckResult("pinsker", bad == 0, "min_margin", worst, n, detail={"violations": bad})


def check_entropy_continuity(seed: int, n: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, bad, finite = math.inf, 0, 0
    for _ in range(n):
        m = int(rng.integers(2, 9))
        p, q = next(_pairs(rng, m, 1))
        bound = it.entropy_continuity_bound(it.kl_divergence(p, q), m)
        if math.isfinite(bound):
            finite += 1
        margin = bound - abs(it.entropy(p) - it.entropy(q))
        worst = min(worst, margin)
        bad += margin < -IDENTITY_TOL
    return CheckResult("entropy_continuity", bad == 0, "min_margin", worst, n,
                       detail={"violations": bad, "finite": finite})


def check_cond_entropy_continuity(seed: int, n: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, bad, finite = math.inf, 0, 0
    for _ in range(n):
        mx, my = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        p, q = next(_pairs(rng, mx * my, 1))
        P = it.JointTable(("X", "Y"), p.reshape(mx, my))
        Q = it.JointTable(("X", "Y"), q.reshape(mx, my))
        bound = it.cond_entropy_continuity_bound(it.kl_divergence(p, q), mx, my)
        finite += math.isfinite(bound)
        gap = abs(it.conditional_entropy(P, "Y", "X") - it.conditional_entropy(Q, "Y", "X"))
        worst = min(worst, bound - gap)
        bad += bound - gap < -IDENTITY_TOL
    return CheckResult("conditional_entropy_continuity", bad == 0, "min_margin", worst, n,
                       detail={"violations": bad, "finite": finite})


def check_cmi_continuity(seed: int, n: int) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, bad, finite = math.inf, 0, 0
    for _ in range(n):
        nq, nc, na, k = int(rng.integers(2, 4)), 2, int(rng.integers(2, 4)), int(rng.integers(1, 3))
        shape = (nq,) + (nc,) * k + (na,)
        p, q = next(_pairs(rng, int(np.prod(shape)), 1))
        axes = ("Q",) + tuple(f"C{t}" for t in range(1, k + 1)) + ("A",)
        R, P = it.JointTable(axes, p.reshape(shape)), it.JointTable(axes, q.reshape(shape))
        pre = list(axes[1:-1])
        gap = abs(it.conditional_mutual_information(R, "A", pre, "Q")
                  - it.conditional_mutual_information(P, "A", pre, "Q"))
        bound = it.cmi_continuity_bound(it.kl_divergence(p, q), nq, nc**k, na)
        finite += math.isfinite(bound)
        worst = min(worst, bound - gap)
        bad += bound - gap < -IDENTITY_TOL
    return CheckResult("cmi_continuity", bad == 0, "min_margin", worst, n,
                       detail={"violations": bad, "finite": finite})


def check_transfer(seeds: Sequence[int], sizes, horizon: int, n_samples: int,
                   alpha: float) -> CheckResult:
    """MLE fits keep at least half the prefix information and stay within the continuity bound."""
    half_ok, bound_ok, finite, n = True, True, 0, 0
    worst = math.inf
    for s in seeds:
        world = orc.generate_aligned_world(s, sizes, horizon)
        model = orc.mle_fit(orc.sample_sequences(world, n_samples, s), alpha, world.sizes, world.horizon)
        for k in range(1, horizon + 1):
            rep = orc.transfer_check(world, model, k)
            half_ok &= rep.half_epsilon_satisfied
            bound_ok &= rep.within_bound
            finite += rep.bound_valid
            worst = min(worst, rep.i_model - rep.epsilon_k / 2)
            n += 1
    return CheckResult("transfer", half_ok and bound_ok, "min_margin", worst, n,
                       detail={"half_epsilon": half_ok, "within_bound": bound_ok, "finite_bounds": finite})


def identity_suite(cfg: VerifyConfig = VerifyConfig()) -> list[CheckResult]:
    joints = random_joints(cfg.n_joints, cfg.seed)
    return [_timed(lambda: check_telescoping(joints)),
            _timed(lambda: check_expected_gain_exact(joints)),
            _timed(lambda: check_expected_gain_mc(joints, cfg.mc_samples, cfg.seed)),
            _timed(lambda: check_cross_entropy(joints, cfg.seed + 1)),
            _timed(lambda: check_kl_chain(joints, cfg.seed + 2))]


def bound_suite(cfg: VerifyConfig = VerifyConfig()) -> list[CheckResult]:
    return [_timed(lambda: check_fano(cfg.seed)),
            _timed(lambda: check_pinsker(cfg.seed, cfg.n_pairs)),
            _timed(lambda: check_entropy_continuity(cfg.seed, cfg.n_pairs)),
            _timed(lambda: check_cond_entropy_continuity(cfg.seed, cfg.n_pairs)),
            _timed(lambda: check_cmi_continuity(cfg.seed, cfg.n_pairs))]


def transfer_suite(cfg: VerifyConfig = VerifyConfig()) -> list[CheckResult]:
    return [_timed(lambda: check_transfer(cfg.transfer_seeds, cfg.world_sizes, cfg.world_horizon,
                                          cfg.transfer_samples, cfg.transfer_alpha))]


def run_all(cfg: VerifyConfig = VerifyConfig()) -> list[CheckResult]:
    return identity_suite(cfg) + bound_suite(cfg) + transfer_suite(cfg)
