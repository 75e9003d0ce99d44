"""Trajectory collection and Monte-Carlo conditional answer entropy."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..traces import (AnswerLabel, EmpiricalAnswerDist, QuestionInstance, TraceRecord,
                      empirical_distribution, extract_answer, label_correctness)
from .backends import Backend, BackendError, BackendUnavailable, DecodingParams, RolloutRequest

TRAJECTORY_SCHEMA = "trajectory.v1"
DEFAULT_N = 16


class CollectionError(RuntimeError):
    """Backend unreachable; ``partial`` holds whatever finished first."""

    def __init__(self, message: str, partial: list | None = None):
        super().__init__(message)
        self.partial = partial or []


def derive_seed(run_seed: int, *parts: Any) -> int:
    """Stable 63-bit seed from the run seed and an identifying key."""
    key = json.dumps([int(run_seed), *[str(p) for p in parts]]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big") >> 1


@dataclass(frozen=True)
class CheckpointPlan:
    stride: int
    positions: tuple[int, ...]


def plan_checkpoints(trace_length: int, stride: int | float | None = None) -> CheckpointPlan:
    """Uniformly strided prefix lengths, always including 0 and the full length.

    ``stride=None`` uses max(1, K // 20); a float in (0, 1) is a fraction of
    the trace length.
    """
    k = int(trace_length)
    if k < 0:
        raise ValueError("trace length must be non-negative")
    if stride is None:
        s = max(1, k // 20)
    elif isinstance(stride, float) and 0 < stride < 1:
        s = max(1, int(stride * k))
    else:
        s = int(stride)
        if s < 1:
            raise ValueError(f"stride must be positive, got {stride}")
    pos = list(range(0, k + 1, s))
    if pos[-1] != k:
        pos.append(k)
    return CheckpointPlan(s, tuple(pos))


def shuffle_prefix(tokens: Sequence[str], k: int, seed: int) -> list[str]:
    """Uniform random permutation of the first ``k`` tokens."""
    if not 0 <= k <= len(tokens):
        raise ValueError(f"prefix length {k} outside [0, {len(tokens)}]")
    prefix = list(tokens[:k])
    order = np.random.default_rng(seed).permutation(k)
    return [prefix[i] for i in order]


@dataclass(frozen=True)
class CheckpointEstimate:
    k: int
    entropy: float
    gold_surprisal: float
    dist: EmpiricalAnswerDist
    degenerate: bool = False


def _fmt(x: float) -> float | str:
    return x if math.isfinite(x) else ("inf" if x > 0 else "nan")


def _unfmt(x: float | str) -> float:
    return float(x)


@dataclass
class EntropyTrajectory:
    question_id: str
    trajectory_index: int
    checkpoints: list[CheckpointEstimate]
    mc_samples: int
    is_correct: bool
    gold: AnswerLabel
    alpha_entropy: float = 0.0
    alpha_surprisal: float = 0.5
    variant: str = "original"
    group: dict[str, str] = field(default_factory=dict)

    @property
    def positions(self) -> list[int]:
        return [c.k for c in self.checkpoints]

    @property
    def length(self) -> int:
        return self.checkpoints[-1].k

    @property
    def entropies(self) -> np.ndarray:
        return np.array([c.entropy for c in self.checkpoints])

    @property
    def surprisals(self) -> np.ndarray:
        return np.array([c.gold_surprisal for c in self.checkpoints])

    def to_json(self) -> str:
        doc = {
            "schema": TRAJECTORY_SCHEMA,
            "question_id": self.question_id,
            "trajectory_index": self.trajectory_index,
            "variant": self.variant,
            "group": self.group,
            "is_correct": self.is_correct,
            "gold": self.gold.key(),
            "mc_samples": self.mc_samples,
            "alpha_entropy": self.alpha_entropy,
            "alpha_surprisal": self.alpha_surprisal,
            "checkpoints": [{"k": c.k, "entropy": _fmt(c.entropy), "gold_surprisal": _fmt(c.gold_surprisal),
                             "counts": c.dist.to_dict()["counts"], "degenerate": c.degenerate}
                            for c in self.checkpoints],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "EntropyTrajectory":
        d = json.loads(line)
        if d.get("schema") != TRAJECTORY_SCHEMA:
            raise ValueError(f"expected schema {TRAJECTORY_SCHEMA}, found {d.get('schema')!r}")
        gold = AnswerLabel.from_key(d["gold"])
        cps = []
        for c in d["checkpoints"]:
            labels = [AnswerLabel.from_key(k) for k, v in c["counts"].items() for _ in range(v)]
            dist = empirical_distribution(labels, d["alpha_surprisal"], gold)
            cps.append(CheckpointEstimate(c["k"], _unfmt(c["entropy"]), _unfmt(c["gold_surprisal"]),
                                          dist, c["degenerate"]))
        return cls(d["question_id"], d["trajectory_index"], cps, d["mc_samples"], d["is_correct"], gold,
                   d["alpha_entropy"], d["alpha_surprisal"], d["variant"], d["group"])


def _tokens_from(response, i: int) -> list[str]:
    if response.tokens is not None:
        return list(response.tokens[i])
    return response.texts[i].split()


def generate_trace(backend: Backend, question: QuestionInstance, index: int, params: DecodingParams,
                   seed: int, stride: int | float | None = None) -> TraceRecord:
    """Sample one reasoning trajectory; non-transport failures yield a failed record."""
    tseed = derive_seed(seed, "trace", question.id, index)
    req = RolloutRequest(question, (), 1, params, tseed, purpose="trace")
    try:
        resp = backend.complete(req)
    except BackendUnavailable:
        raise
    except BackendError as e:
        return TraceRecord(question.id, index, [], AnswerLabel("null"), False, params.to_dict(), [0],
                           tseed, failed=True, error=str(e))
    tokens = _tokens_from(resp, 0)
    label = extract_answer(resp.texts[0], question.task_kind, question.choice_set)
    plan = plan_checkpoints(len(tokens), stride)
    return TraceRecord(question.id, index, tokens, label, label_correctness(label, question.gold_answer),
                       params.to_dict(), list(plan.positions), tseed,
                       metadata={"token_unit": resp.token_unit, "attempts": resp.attempts})


def generate_trajectories(backend: Backend, question: QuestionInstance, M: int, params: DecodingParams,
                          seed: int, stride: int | float | None = None) -> list[TraceRecord]:
    if M < 1:
        raise ValueError("M must be at least 1")
    out: list[TraceRecord] = []
    for i in range(M):
        try:
            out.append(generate_trace(backend, question, i, params, seed, stride))
        except BackendUnavailable as e:
            raise CollectionError(str(e), out) from e
    return out


def estimate_conditional_entropy(backend: Backend, question: QuestionInstance, prefix_tokens: Sequence[str],
                                 N: int = DEFAULT_N, params: DecodingParams | None = None,
                                 alpha_entropy: float = 0.0, alpha_surprisal: float = 0.5,
                                 seed: int = 0, k: int | None = None) -> CheckpointEstimate:
    """Plug-in answer entropy and gold surprisal from N rollouts after a prefix."""
    if N < 1:
        raise ValueError("N must be at least 1")
    params = params or DecodingParams()
    resp = backend.complete(RolloutRequest(question, tuple(prefix_tokens), N, params, seed))
    head = " ".join(prefix_tokens)
    labels = [extract_answer(f"{head} {text}" if head else text, question.task_kind, question.choice_set)
              for text in resp.texts]
    dist = empirical_distribution(labels, alpha_surprisal, question.gold_answer)
    degenerate = all(a.is_null for a in labels)
    h = dist.with_alpha(alpha_entropy).entropy()
    s = dist.surprisal(question.gold_answer)
    return CheckpointEstimate(len(prefix_tokens) if k is None else k, h, s, dist, degenerate)


def evaluate_trace(backend: Backend, question: QuestionInstance, trace: TraceRecord, N: int = DEFAULT_N,
                   params: DecodingParams | None = None, seed: int = 0, alpha_entropy: float = 0.0,
                   alpha_surprisal: float = 0.5, positions: Sequence[int] | None = None,
                   shuffle: bool = False, variant: str = "original", max_in_flight: int = 1,
                   group: dict[str, str] | None = None) -> EntropyTrajectory:
    """Estimate entropy and gold surprisal independently at every checkpoint.

    Per-checkpoint seeds depend only on (seed, question, trajectory, k, N), so
    the evaluation order never changes the result, and a shuffled run shares
    its rollout seeds with the original.
    """
    params = params or DecodingParams()
    positions = list(trace.checkpoint_positions if positions is None else positions)

    def one(k: int) -> CheckpointEstimate:
        if shuffle:
            prefix = shuffle_prefix(trace.tokens, k, derive_seed(seed, "permute", question.id,
                                                                 trace.trajectory_index, k))
        else:
            prefix = trace.tokens[:k]
        return estimate_conditional_entropy(
            backend, question, prefix, N, params, alpha_entropy, alpha_surprisal,
            derive_seed(seed, "rollout", question.id, trace.trajectory_index, k, N), k=k)

    if max_in_flight > 1 and len(positions) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            cps = list(pool.map(one, positions))
    else:
        cps = [one(k) for k in positions]
    return EntropyTrajectory(question.id, trace.trajectory_index, cps, N, trace.is_correct,
                             question.gold_answer, alpha_entropy, alpha_surprisal, variant, dict(group or {}))


def evaluate_question(backend: Backend, question: QuestionInstance, M: int, N: int = DEFAULT_N,
                      stride: int | float | None = None, seed: int = 0,
                      params: DecodingParams | None = None, alpha_entropy: float = 0.0,
                      alpha_surprisal: float = 0.5, max_in_flight: int = 1) -> list[EntropyTrajectory]:
    params = params or DecodingParams()
    traces = generate_trajectories(backend, question, M, params, seed, stride)
    return [evaluate_trace(backend, question, tr, N, params, seed, alpha_entropy, alpha_surprisal,
                           max_in_flight=max_in_flight)
            for tr in traces if not tr.failed]
