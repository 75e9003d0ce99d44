"""Trace-level diagnostics computed from entropy trajectories.

Alignment between answer entropy and gold surprisal, normalized cumulative
gain curves, prefix AUC separability, saturation, and bootstrap intervals.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .rollout.engine import EntropyTrajectory

GRID = tuple(round(0.05 * i, 2) for i in range(21))
MIN_DENOMINATOR = 0.05
SATURATION_TAU = 0.05
SATURATION_WINDOW = 2


@dataclass(frozen=True)
class AlignmentResult:
    question_id: str
    trajectory_index: int
    rho: float                      # nan when undefined
    n_checkpoints: int
    n_excluded: int = 0
    degenerate_reason: str | None = None   # constant_entropy | constant_surprisal | too_few_points
    is_correct: bool | None = None
    group: tuple[str, str] = ("", "")

    @property
    def defined(self) -> bool:
        return not math.isnan(self.rho)


def _is_constant(x: np.ndarray) -> bool:
    return bool(np.all(np.abs(x - x[0]) <= 1e-12))


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    r = float((xc * yc).sum() / math.sqrt((xc * xc).sum() * (yc * yc).sum()))
    return max(-1.0, min(1.0, r))


def group_key(traj: EntropyTrajectory) -> tuple[str, str]:
    return traj.group.get("model_tag", ""), traj.group.get("dataset_tag", "")


def sia_alignment(traj: EntropyTrajectory, method: str = "pearson") -> AlignmentResult:
    """Correlation across checkpoints between answer entropy and gold surprisal.

    Checkpoints with infinite surprisal are dropped pairwise. Fewer than three
    usable points or a constant series gives an undefined (nan) result.
    """
    h, s = traj.entropies, traj.surprisals
    keep = np.isfinite(h) & np.isfinite(s)
    h, s = h[keep], s[keep]
    base = dict(question_id=traj.question_id, trajectory_index=traj.trajectory_index,
                n_checkpoints=int(keep.sum()), n_excluded=int((~keep).sum()),
                is_correct=traj.is_correct, group=group_key(traj))
    reason = None
    if len(h) < 3:
        reason = "too_few_points"
    elif _is_constant(h):
        reason = "constant_entropy"
    elif _is_constant(s):
        reason = "constant_surprisal"
    if reason:
        return AlignmentResult(rho=math.nan, degenerate_reason=reason, **base)
    if method == "spearman":
        h, s = rankdata(h), rankdata(s)
    elif method != "pearson":
        raise ValueError(f"unknown correlation method {method!r}")
    return AlignmentResult(rho=_pearson(h, s), **base)


def bootstrap_ci(values: Sequence[float], B: int = 1000, level: float = 0.95, seed: int = 0,
                 clusters: Sequence | None = None, statistic=np.mean) -> tuple[float, float]:
    """Percentile bootstrap interval for ``statistic``.

    With ``clusters`` the resampling unit is the cluster (e.g. the question),
    and the statistic is recomputed over all values of the drawn clusters.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return (math.nan, math.nan)
    if x.size < 2:
        v = float(statistic(x))
        return (v, v)
    rng = np.random.default_rng(seed)
    if clusters is None:
        idx = rng.integers(0, x.size, size=(B, x.size))
        stats = np.array([statistic(x[i]) for i in idx])
    else:
        labels = np.asarray(clusters)
        uniq = list(dict.fromkeys(labels.tolist()))
        members = [np.flatnonzero(labels == u) for u in uniq]
        if len(uniq) < 2:
            v = float(statistic(x))
            return (v, v)
        stats = np.empty(B)
        for b in range(B):
            pick = rng.integers(0, len(uniq), size=len(uniq))
            stats[b] = statistic(x[np.concatenate([members[p] for p in pick])])
    alpha = (1.0 - level) / 2
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass(frozen=True)
class AlignmentRow:
    model_tag: str
    dataset_tag: str
    mean_rho: float
    count: int
    n_undefined: int
    ci_low: float
    ci_high: float


def aggregate_alignment(results: Iterable[AlignmentResult], B: int = 1000, seed: int = 0,
                        level: float = 0.95) -> list[AlignmentRow]:
    """Mean of defined rho per (model, dataset) with a question-level bootstrap CI."""
    by_group: dict[tuple[str, str], list[AlignmentResult]] = defaultdict(list)
    for r in results:
        by_group[r.group].append(r)
    rows = []
    for g in sorted(by_group):
        rs = by_group[g]
        ok = [r for r in rs if r.defined]
        if not ok:
            continue
        vals = [r.rho for r in ok]
        lo, hi = bootstrap_ci(vals, B, level, seed, clusters=[r.question_id for r in ok])
        rows.append(AlignmentRow(g[0], g[1], float(np.mean(vals)), len(ok), len(rs) - len(ok), lo, hi))
    return rows


def _relative(traj: EntropyTrajectory) -> np.ndarray:
    k = np.asarray(traj.positions, dtype=float)
    return k / k[-1] if k[-1] > 0 else np.zeros_like(k)


def entropy_at(traj: EntropyTrajectory, s: float | Sequence[float]) -> np.ndarray | float:
    """Answer entropy linearly interpolated at relative prefix length s."""
    h = traj.entropies
    if traj.length == 0:
        return np.full(np.shape(s), h[0]) if np.ndim(s) else float(h[0])
    out = np.interp(s, _relative(traj), h)
    return out if np.ndim(s) else float(out)


@dataclass
class GainCurve:
    grid: tuple[float, ...]
    mean: dict[str, list[float]]
    ci_low: dict[str, list[float]]
    ci_high: dict[str, list[float]]
    counts: dict[str, int]
    excluded: int
    diagnostic: str | None = None


def normalized_gain(traj: EntropyTrajectory, grid: Sequence[float] = GRID,
                    min_denominator: float = MIN_DENOMINATOR) -> np.ndarray | None:
    """Cumulative information estimate Ĥ(0) - Ĥ(s), divided by its value at s = 1.

    None when the full-trace gain is below ``min_denominator`` in magnitude.
    Negative values are kept as estimated.
    """
    if traj.length == 0:
        return None
    h = traj.entropies
    gain = h[0] - h
    denom = gain[-1]
    if not math.isfinite(denom) or abs(denom) < min_denominator:
        return None
    return np.interp(grid, _relative(traj), gain) / denom


def gain_curve(trajectories: Sequence[EntropyTrajectory], grid: Sequence[float] = GRID,
               min_denominator: float = MIN_DENOMINATOR, B: int = 1000, seed: int = 0) -> GainCurve:
    grid = tuple(grid)
    curves: dict[str, list[np.ndarray]] = {"correct": [], "incorrect": []}
    qids: dict[str, list[str]] = {"correct": [], "incorrect": []}
    excluded = 0
    for tr in trajectories:
        g = normalized_gain(tr, grid, min_denominator)
        if g is None:
            excluded += 1
            continue
        cls = "correct" if tr.is_correct else "incorrect"
        curves[cls].append(g)
        qids[cls].append(tr.question_id)
    mean, lo, hi = {}, {}, {}
    for cls, cs in curves.items():
        if not cs:
            mean[cls] = lo[cls] = hi[cls] = [math.nan] * len(grid)
            continue
        arr = np.vstack(cs)
        mean[cls] = arr.mean(axis=0).tolist()
        cis = [bootstrap_ci(arr[:, i], B, 0.95, seed, clusters=qids[cls]) for i in range(len(grid))]
        lo[cls] = [c[0] for c in cis]
        hi[cls] = [c[1] for c in cis]
    diag = "all trajectories excluded" if excluded == len(trajectories) else None
    return GainCurve(grid, mean, lo, hi, {c: len(v) for c, v in curves.items()}, excluded, diag)


def mann_whitney_auc(pos_scores: Sequence[float], neg_scores: Sequence[float]) -> float:
    """P(pos > neg) + 0.5 P(tie), from average ranks."""
    pos, neg = np.asarray(pos_scores, float), np.asarray(neg_scores, float)
    n1, n0 = len(pos), len(neg)
    if n1 == 0 or n0 == 0:
        return math.nan
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    return float(u / (n1 * n0))


def auc_at_prefix(trajectories: Sequence[EntropyTrajectory], s: float) -> tuple[float, int, int]:
    """AUC of -entropy(s) for telling correct from incorrect traces."""
    pos = [-entropy_at(t, s) for t in trajectories if t.is_correct]
    neg = [-entropy_at(t, s) for t in trajectories if not t.is_correct]
    return mann_whitney_auc(pos, neg), len(pos), len(neg)


@dataclass
class SeparabilityCurve:
    grid: tuple[float, ...]
    auc: list[float]
    n_correct: int
    n_incorrect: int
    ci_low: list[float] = field(default_factory=list)
    ci_high: list[float] = field(default_factory=list)


def separability_curve(trajectories: Sequence[EntropyTrajectory], grid: Sequence[float] = GRID,
                       B: int = 1000, seed: int = 0) -> SeparabilityCurve:
    grid = tuple(grid)
    trajectories = list(trajectories)
    aucs = [auc_at_prefix(trajectories, s)[0] for s in grid]
    _, n1, n0 = auc_at_prefix(trajectories, 0.0) if trajectories else (math.nan, 0, 0)
    lo, hi = [], []
    qids = sorted({t.question_id for t in trajectories})
    by_q = defaultdict(list)
    for t in trajectories:
        by_q[t.question_id].append(t)
    if n1 and n0 and len(qids) >= 2:
        rng = np.random.default_rng(seed)
        H = np.array([[entropy_at(t, s) for s in grid] for t in trajectories])
        correct = np.array([t.is_correct for t in trajectories])
        members = {q: [i for i, t in enumerate(trajectories) if t.question_id == q] for q in qids}
        stats = []
        for _ in range(B):
            idx = np.concatenate([members[qids[j]] for j in rng.integers(0, len(qids), len(qids))]).astype(int)
            c = correct[idx]
            if c.all() or not c.any():
                continue
            stats.append([mann_whitney_auc(-H[idx][c, i], -H[idx][~c, i]) for i in range(len(grid))])
        if stats:
            arr = np.asarray(stats)
            lo = np.quantile(arr, 0.025, axis=0).tolist()
            hi = np.quantile(arr, 0.975, axis=0).tolist()
    if not lo:
        lo = hi = [math.nan] * len(grid)
    return SeparabilityCurve(grid, aucs, n1, n0, lo, hi)


@dataclass(frozen=True)
class SaturationReport:
    plateau_detected: bool
    onset: int | None
    plateau_level: float | None
    rebound_detected: bool
    insufficient: bool = False


def saturation_detect(traj: EntropyTrajectory, tau: float = SATURATION_TAU,
                      window: int = SATURATION_WINDOW) -> SaturationReport:
    """Plateau: ``window`` consecutive checkpoint steps with |ΔĤ| < tau.

    A rebound is a later entropy value more than 2 tau above the plateau level.
    """
    h = traj.entropies
    steps = np.diff(h)
    if len(steps) < window:
        return SaturationReport(False, None, None, False, insufficient=True)
    small = np.abs(steps) < tau
    for i in range(len(steps) - window + 1):
        if small[i:i + window].all():
            level = float(h[i:i + window + 1].mean())
            rebound = bool(np.any(h[i + window + 1:] > level + 2 * tau))
            return SaturationReport(True, traj.positions[i], level, rebound)
    return SaturationReport(False, None, None, False)


def mean_entropy_curve(trajectories: Sequence[EntropyTrajectory], grid: Sequence[float] = GRID) -> list[float]:
    if not trajectories:
        return [math.nan] * len(grid)
    return np.mean([entropy_at(t, list(grid)) for t in trajectories], axis=0).tolist()


@dataclass(frozen=True)
class PairedRow:
    model_tag: str
    dataset_tag: str
    original_mean_rho: float
    ablated_mean_rho: float
    original_count: int
    ablated_count: int


def paired_alignment(original: Sequence[EntropyTrajectory], ablated: Sequence[EntropyTrajectory],
                     method: str = "pearson") -> list[PairedRow]:
    """Per-group mean rho before and after an ablation."""
    def means(trajs):
        acc = defaultdict(list)
        for t in trajs:
            r = sia_alignment(t, method)
            if r.defined:
                acc[r.group].append(r.rho)
        return acc
    a, b = means(original), means(ablated)
    rows = []
    for g in sorted(set(a) | set(b)):
        av, bv = a.get(g, []), b.get(g, [])
        rows.append(PairedRow(g[0], g[1], float(np.mean(av)) if av else math.nan,
                              float(np.mean(bv)) if bv else math.nan, len(av), len(bv)))
    return rows
