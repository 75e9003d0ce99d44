"""Completion backends: an in-process synthetic world and an OpenAI-compatible HTTP client."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Protocol, Sequence

import httpx
import numpy as np

from ..oracle import ExactJoint, TabularAutoregressiveModel
from ..traces import AnswerLabel, QuestionInstance, TaskKind

log = logging.getLogger(__name__)


class BackendError(RuntimeError):
    """A request failed in a way that retrying will not fix."""


class BackendUnavailable(BackendError):
    """Transport errors or throttling persisted through every retry."""


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.7
    top_p: float = 0.9
    max_tokens: int = 600
    n: int = 1

    def validate(self, allow_degenerate: bool = False) -> "DecodingParams":
        if self.temperature < 0 or (self.temperature == 0 and not allow_degenerate):
            raise ValueError("temperature must be > 0; greedy decoding collapses the rollout "
                             "distribution (pass allow_degenerate to override)")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.max_tokens < 1 or self.n < 1:
            raise ValueError("max_tokens and n must be positive")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RolloutRequest:
    question: QuestionInstance
    prefix_tokens: tuple[str, ...]
    n: int
    params: DecodingParams
    seed: int
    purpose: str = "rollout"   # "trace" for a fresh trajectory


@dataclass
class RolloutResponse:
    texts: list[str]
    tokens: list[list[str]] | None = None
    attempts: int = 1
    token_unit: str = "backend"


class Backend(Protocol):
    def complete(self, request: RolloutRequest) -> RolloutResponse: ...


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=-1), probs.shape[-1] - 1)


class SyntheticBackend:
    """Completion backend driven by exact tables.

    ``model`` supplies continuations and answers. When ``world`` is given and
    ``coupled`` is true, fresh trajectories are drawn from the world
    conditioned on the question's hidden gold answer, i.e. traces and gold are
    coupled through the world joint; otherwise trajectories come from the
    model alone and are independent of the gold answer.

    The tables are used as the sampling distribution directly; temperature
    and top-p are recorded but not applied, except that temperature 0 selects
    the most probable symbol at every step.
    """

    def __init__(self, model: TabularAutoregressiveModel, world: ExactJoint | None = None,
                 coupled: bool = False, label: str = "synthetic"):
        if coupled and world is None:
            raise ValueError("a coupled backend needs the world joint")
        self.model = model
        self.world = world
        self.coupled = coupled
        self.label = label
        self._sym = {s: i for i, s in enumerate(model.c_alphabet)}
        if coupled:
            m = world.mass
            qa = m.sum(axis=tuple(range(1, m.ndim - 1)))
            self._trace_given_qa = np.moveaxis(m, -1, 1) / np.where(qa > 0, qa, 1.0)[
                (...,) + (None,) * world.horizon]

    def questions(self, n: int | None = None, seed: int = 0, tag: str | None = None) -> list[QuestionInstance]:
        """Question instances with gold answers drawn from the world's p*(A | Q)."""
        source = self.world if self.world is not None else self.model.as_exact_joint()
        qa = source.qa_marginal()
        pa = qa / qa.sum(axis=1, keepdims=True)
        nq = qa.shape[0]
        n = nq if n is None else n
        rng = np.random.default_rng(seed)
        tag = tag or self.label
        out = []
        for i in range(n):
            q = i % nq
            a = int(rng.choice(pa.shape[1], p=pa[q]))
            gold = AnswerLabel("numeric", source.a_alphabet[a])
            out.append(QuestionInstance(f"{tag}-{i:03d}", TaskKind.NUMERIC,
                                        f"question {source.q_alphabet[q]}", gold,
                                        meta={"q": q, "gold_index": a}))
        return out

    def _answer_text(self, tokens: Sequence[str], a: int) -> str:
        body = " ".join(tokens)
        return (body + " " if body else "") + f"#### {self.model.a_alphabet[a]}"

    def complete(self, request: RolloutRequest) -> RolloutResponse:
        q = int(request.question.meta["q"])
        rng = np.random.default_rng(request.seed)
        greedy = request.params.temperature == 0
        k_total = self.model.horizon
        n = request.n
        try:
            prefix = [self._sym[t] for t in request.prefix_tokens]
        except KeyError as e:
            raise BackendError(f"token {e.args[0]!r} not in the synthetic alphabet") from None
        if len(prefix) > k_total:
            raise BackendError("prefix longer than the synthetic horizon")

        def pick(probs):
            return probs.argmax(axis=-1) if greedy else _sample_rows(rng, probs)

        if request.purpose == "trace" and self.coupled and not prefix:
            gold = int(request.question.meta["gold_index"])
            flat = self._trace_given_qa[q, gold].reshape(-1)
            idx = np.full(n, flat.argmax()) if greedy else rng.choice(flat.size, size=n, p=flat / flat.sum())
            ctx = np.stack(np.unravel_index(idx, (len(self.model.c_alphabet),) * k_total), axis=1) \
                if k_total else np.zeros((n, 0), dtype=int)
        else:
            ctx = np.tile(np.asarray(prefix, dtype=int), (n, 1)).reshape(n, len(prefix))
            qs = np.full(n, q)
            for t in range(len(prefix), k_total):
                nxt = pick(self.model.steps[t][(qs, *ctx.T)])
                ctx = np.concatenate([ctx, nxt[:, None]], axis=1)
        answers = pick(self.model.answer[(np.full(n, q), *ctx.T)])
        syms = self.model.c_alphabet
        cont = [[syms[c] for c in row[len(prefix):]] for row in ctx]
        texts = [self._answer_text(toks, a) for toks, a in zip(cont, answers)]
        return RolloutResponse(texts, cont, 1, "symbol")


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff_seconds: float = 1.0
    multiplier: float = 2.0


RETRY_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass
class HttpCompletionsBackend:
    """OpenAI-compatible ``/v1/completions`` client with retries and an in-flight cap.

    Generated text is split on whitespace to obtain token positions; traces
    record ``token_unit = "whitespace"``.
    """

    endpoint: str
    model: str
    auth_env: str | None = None
    timeout: float = 60.0
    max_in_flight: int = 8
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    prompt_prefix: str = ""
    prompt_suffix: str = ""
    transport: httpx.BaseTransport | None = None
    sleep: Any = time.sleep

    def __post_init__(self):
        if not self.endpoint:
            raise ValueError("http backend requires an endpoint")
        headers = {}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=self.endpoint.rstrip("/"), headers=headers,
                                    timeout=self.timeout, transport=self.transport)
        self._slots = threading.BoundedSemaphore(self.max_in_flight)
        self.retries_used = 0

    def close(self) -> None:
        self._client.close()

    def render_prompt(self, question: QuestionInstance, prefix_tokens: Sequence[str]) -> str:
        prompt = self.prompt_prefix + question.prompt_text + self.prompt_suffix
        if prefix_tokens:
            sep = "" if not prompt or prompt[-1].isspace() else " "
            prompt += sep + " ".join(prefix_tokens)
        return prompt

    def _post(self, body: dict) -> tuple[dict, int]:
        delay = self.retry.backoff_seconds
        last: str = ""
        for attempt in range(1, self.retry.attempts + 1):
            try:
                with self._slots:
                    resp = self._client.post("/v1/completions", json=body)
            except httpx.TransportError as e:
                last = f"transport error: {e!r}"
            else:
                if resp.status_code in RETRY_STATUS:
                    last = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    if attempt > 1:
                        log.info("completion succeeded after %d retries", attempt - 1)
                    return resp.json(), attempt
            if attempt < self.retry.attempts:
                self.retries_used += 1
                log.warning("attempt %d failed (%s); retrying in %.2fs", attempt, last, delay)
                self.sleep(delay)
                delay *= self.retry.multiplier
        raise BackendUnavailable(f"gave up after {self.retry.attempts} attempts: {last}")

    def complete(self, request: RolloutRequest) -> RolloutResponse:
        p = request.params
        body = {"model": self.model, "prompt": self.render_prompt(request.question, request.prefix_tokens),
                "temperature": p.temperature, "top_p": p.top_p, "max_tokens": p.max_tokens,
                "n": request.n}
        data, attempts = self._post(body)
        try:
            texts = [c["text"] for c in data["choices"]]
        except (KeyError, TypeError) as e:
            raise BackendError(f"malformed completion response: {e!r}") from None
        if len(texts) != request.n:
            raise BackendError(f"asked for {request.n} completions, got {len(texts)}")
        return RolloutResponse(texts, [t.split() for t in texts], attempts, "whitespace")
