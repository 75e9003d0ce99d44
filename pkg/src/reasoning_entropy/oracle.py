"""Exactly enumerable synthetic worlds over (Q, C_1..C_K, A).

Everything here works on dense tables, so every entropy, information and
error quantity is computed exactly rather than estimated. Worlds are small by
design: the horizon is capped at 6 and tables at ``MAX_CELLS`` cells.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Sequence

import numpy as np

from . import infotheory as it
from .infotheory import MASS_TOL, MAX_CELLS, JointTable, ValidationError

WORLD_SCHEMA = "world.v1"
MAX_HORIZON = 6


class GenerationError(RuntimeError):
    def __init__(self, message: str, epsilons: Sequence[float] = ()):
        super().__init__(message)
        self.epsilons = list(epsilons)


class FitError(ValueError):
    pass


def _check_dims(nq: int, nc: int, na: int, horizon: int, max_cells: int = MAX_CELLS) -> None:
    if min(nq, nc, na) < 1:
        raise ValidationError("alphabet sizes must be positive")
    if not 0 <= horizon <= MAX_HORIZON:
        raise ValidationError(f"horizon must be in [0, {MAX_HORIZON}], got {horizon}")
    cells = nq * nc**horizon * na
    if cells > max_cells:
        raise ValidationError(f"world needs {cells} cells, cap is {max_cells}")


def _axes(horizon: int) -> tuple[str, ...]:
    return ("Q",) + tuple(f"C{t}" for t in range(1, horizon + 1)) + ("A",)


def default_alphabets(nq: int, nc: int, na: int) -> tuple[tuple[str, ...], ...]:
    """Question ids, token symbols and numeric answer labels."""
    return (tuple(f"q{i}" for i in range(nq)),
            tuple(f"c{i}" for i in range(nc)),
            tuple(str(i) for i in range(na)))


@dataclass(frozen=True, eq=False)
class ExactJoint:
    """Dense joint r(Q, C_1..C_K, A)."""

    q_alphabet: tuple[str, ...]
    c_alphabet: tuple[str, ...]
    a_alphabet: tuple[str, ...]
    horizon: int
    mass: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("q_alphabet", "c_alphabet", "a_alphabet"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        nq, nc, na = len(self.q_alphabet), len(self.c_alphabet), len(self.a_alphabet)
        _check_dims(nq, nc, na, self.horizon)
        mass = np.asarray(self.mass, dtype=float)
        expected = (nq,) + (nc,) * self.horizon + (na,)
        if mass.shape != expected:
            raise ValidationError(f"mass shape {mass.shape} does not match alphabets {expected}")
        # validates sums and signs
        table = JointTable(_axes(self.horizon), mass)
        object.__setattr__(self, "mass", table.mass)
        object.__setattr__(self, "_table", table)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.q_alphabet), len(self.c_alphabet), len(self.a_alphabet)

    @property
    def table(self) -> JointTable:
        return self._table

    @property
    def prefix_axes(self) -> list[str]:
        return [f"C{t}" for t in range(1, self.horizon + 1)]

    def prefix(self, k: int) -> list[str]:
        if not 0 <= k <= self.horizon:
            raise ValidationError(f"prefix length {k} outside [0, {self.horizon}]")
        return self.prefix_axes[:k]

    def qa_marginal(self) -> np.ndarray:
        return self.table.marginal(["Q", "A"])

    def posterior(self, k: int) -> np.ndarray:
        """r(A | Q, C<=k) as an array of shape (nq, nc, ..., nc, na).

        Zero-mass contexts get the uniform row.
        """
        m = self.table.marginal(["Q"] + self.prefix(k) + ["A"])
        return _normalize_rows(m)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": WORLD_SCHEMA,
            "q_alphabet": list(self.q_alphabet),
            "c_alphabet": list(self.c_alphabet),
            "a_alphabet": list(self.a_alphabet),
            "horizon": self.horizon,
            "mass": self.mass.reshape(-1).tolist(),
            "params": self.params,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "ExactJoint":
        if doc.get("schema") != WORLD_SCHEMA:
            raise ValidationError(f"expected schema {WORLD_SCHEMA}, found {doc.get('schema')!r}")
        nq, nc, na = len(doc["q_alphabet"]), len(doc["c_alphabet"]), len(doc["a_alphabet"])
        k = int(doc["horizon"])
        mass = np.asarray(doc["mass"], dtype=float).reshape((nq,) + (nc,) * k + (na,))
        return cls(doc["q_alphabet"], doc["c_alphabet"], doc["a_alphabet"], k, mass,
                   dict(doc.get("params", {})))


def _normalize_rows(t: np.ndarray) -> np.ndarray:
    """Normalize along the last axis; all-zero rows become uniform."""
    s = t.sum(axis=-1, keepdims=True)
    width = t.shape[-1]
    safe = np.where(s > 0, s, 1.0)
    return np.where(s > 0, t / safe, 1.0 / width)


@dataclass(frozen=True, eq=False)
class TabularAutoregressiveModel:
    """Tabular p(Q) p(C_1|Q) ... p(C_K|Q, C_<K) p(A|Q, C_1..C_K).

    ``steps[t]`` has shape (nq, nc x t, nc) and holds p(C_{t+1} | Q, C_<=t);
    ``answer`` has shape (nq, nc x K, na).
    """

    q_alphabet: tuple[str, ...]
    c_alphabet: tuple[str, ...]
    a_alphabet: tuple[str, ...]
    q_marginal: np.ndarray
    steps: tuple[np.ndarray, ...]
    answer: np.ndarray
    smoothing_alpha: float = 0.0

    @property
    def horizon(self) -> int:
        return len(self.steps)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.q_alphabet), len(self.c_alphabet), len(self.a_alphabet)

    def check_rows(self, tol: float = MASS_TOL) -> None:
        for t in (self.q_marginal, *self.steps, self.answer):
            if np.any(t < 0) or np.any(np.abs(t.sum(axis=-1) - 1.0) > tol):
                raise ValidationError("conditional rows must be distributions")

    def joint(self) -> np.ndarray:
        nq, nc, na = self.sizes
        k = self.horizon
        out = self.q_marginal.reshape((nq,) + (1,) * (k + 1))
        for t, step in enumerate(self.steps):
            shape = (nq,) + (nc,) * (t + 1) + (1,) * (k - t)
            out = out * step.reshape(shape)
        return out * self.answer

    def as_exact_joint(self, params: dict | None = None) -> ExactJoint:
        return ExactJoint(self.q_alphabet, self.c_alphabet, self.a_alphabet, self.horizon,
                          self.joint(), params or {})

    def answer_posterior(self, k: int) -> np.ndarray:
        """p(A | Q, C<=k) under the model, shape (nq, nc x k, na).

        Computed by propagating the model's own conditionals forward, so
        contexts with zero joint mass still get the posterior implied by the
        fallback rows.
        """
        nq, nc, na = self.sizes
        post = self.answer
        for t in range(self.horizon - 1, k - 1, -1):
            post = np.einsum("...c,...ca->...a", self.steps[t], post)
        return post

    @classmethod
    def from_joint(cls, j: ExactJoint, q_marginal: np.ndarray | None = None) -> "TabularAutoregressiveModel":
        """Exact conditionals of ``j``; zero-mass contexts fall back to uniform."""
        mass = j.mass
        k = j.horizon
        steps = []
        for t in range(k):
            m = mass.sum(axis=tuple(range(t + 2, k + 2)))
            steps.append(_normalize_rows(m))
        answer = _normalize_rows(mass)
        qm = mass.reshape(mass.shape[0], -1).sum(axis=1) if q_marginal is None else q_marginal
        return cls(j.q_alphabet, j.c_alphabet, j.a_alphabet, qm, tuple(steps), answer, 0.0)


# -- generators ---------------------------------------------------------------

def _channel(rng: np.random.Generator, nq: int, nc: int, na: int, horizon: int,
             strength: float, resolution: int | None, code: str = "reveal") -> np.ndarray:
    """Per-step noisy code channel, shape (nq, horizon, na, nc).

    ``reveal``: at step t for question q, each answer is mapped to one of
    ``resolution`` code symbols (a random, position-specific map). With
    probability ``strength`` the token is that code symbol; otherwise it is
    drawn uniformly from the symbols outside the code image (or from all
    symbols when the image covers the alphabet).

    ``eliminate``: each answer x gets a position-specific symbol meaning
    "not x"; with probability ``strength`` the token names a uniformly chosen
    wrong answer, otherwise it is filler as above.
    """
    if code == "eliminate":
        if nc < na:
            raise ValidationError("elimination codes need at least as many symbols as answers")
        ch = np.zeros((nq, horizon, na, nc))
        for q in range(nq):
            for t in range(horizon):
                perm = rng.permutation(nc)
                sym, filler = perm[:na], perm[na:]
                noise = np.full(nc, 1.0 / nc) if not filler.size else np.bincount(filler, minlength=nc) / filler.size
                ch[q, t] = (1.0 - strength) * noise
                for a in range(na):
                    ch[q, t, a, sym[np.arange(na) != a]] += strength / (na - 1)
        return ch
    if code != "reveal":
        raise ValidationError(f"unknown code {code!r}")
    res = min(nc, na) if resolution is None else resolution
    if not 1 <= res <= min(nc, na):
        raise ValidationError(f"resolution must be in [1, {min(nc, na)}], got {res}")
    ch = np.zeros((nq, horizon, na, nc))
    for q in range(nq):
        for t in range(horizon):
            image = rng.permutation(nc)[:res]
            order = rng.permutation(na)
            code = np.empty(na, dtype=int)
            code[order] = image[np.arange(na) % res]
            filler = np.setdiff1d(np.arange(nc), image)
            noise = np.zeros(nc)
            if filler.size:
                noise[filler] = 1.0 / filler.size
            else:
                noise[:] = 1.0 / nc
            ch[q, t] = (1.0 - strength) * noise
            ch[q, t, np.arange(na), code] += strength
    return ch


def _trace_given_latent(ch: np.ndarray, nc: int, horizon: int) -> np.ndarray:
    """Product of per-step channels: array (nq, nb, nc, ..., nc)."""
    nq, _, nb, _ = ch.shape
    out = np.ones((nq, nb) + (1,) * horizon)
    for t in range(horizon):
        shape = [nq, nb] + [1] * horizon
        shape[2 + t] = nc
        out = out * ch[:, t].reshape(shape)
    return out


def prefix_informations(j: ExactJoint) -> list[float]:
    """I(A; C<=k | Q) for k = 1..K."""
    return [exact_prefix_quantities(j, k).information for k in range(1, j.horizon + 1)]


def generate_aligned_world(seed: int, sizes: Sequence[int] = (2, 2, 4), horizon: int = 3,
                           strength: float = 0.5, resolution: int | None = None,
                           answer_concentration: float = 4.0, code: str = "reveal",
                           sia_floor: float = 1e-6) -> ExactJoint:
    """World in which every reasoning prefix carries information about A.

    Tokens are noisy, position-specific codes of the answer; ``strength`` is
    the probability that a token carries the code. At ``strength=1`` with at
    least as many symbols as answers, C_1 reveals A.
    """
    nq, nc, na = (int(s) for s in sizes)
    if min(nq, nc, na) < 2 or horizon < 1:
        raise ValidationError("aligned worlds need alphabet sizes >= 2 and horizon >= 1")
    if not 0 < strength <= 1:
        raise ValidationError(f"strength must be in (0, 1], got {strength}")
    _check_dims(nq, nc, na, horizon)
    rng = np.random.default_rng(seed)
    pq = rng.dirichlet(np.full(nq, 4.0))
    pa = rng.dirichlet(np.full(na, answer_concentration), size=nq)
    ch = _channel(rng, nq, nc, na, horizon, strength, resolution, code)
    traces = _trace_given_latent(ch, nc, horizon)                     # (nq, na, C...)
    mass = np.moveaxis(traces * (pq[:, None] * pa).reshape((nq, na) + (1,) * horizon), 1, -1)
    params = {"generator": "aligned", "seed": seed, "sizes": [nq, nc, na], "horizon": horizon,
              "strength": strength, "resolution": resolution,
              "answer_concentration": answer_concentration, "code": code}
    world = ExactJoint(*default_alphabets(nq, nc, na), horizon, mass / mass.sum(), params)
    eps = prefix_informations(world)
    if min(eps) <= sia_floor:
        raise GenerationError(f"prefix information {min(eps):.3g} at or below floor {sia_floor}", eps)
    if strength < 1 and any(b <= a for a, b in zip(eps, eps[1:])):
        raise GenerationError("prefix information is not strictly increasing", eps)
    return world


class MisalignedWorld(NamedTuple):
    truth: ExactJoint
    hallucinator: TabularAutoregressiveModel


def generate_misaligned_world(seed: int, sizes: Sequence[int] = (2, 2, 4), horizon: int = 3,
                              strength: float = 0.5, commitment: float = 0.8,
                              resolution: int | None = None,
                              answer_concentration: float = 4.0, code: str = "reveal") -> MisalignedWorld:
    """Truth and a hallucinating model whose reasoning ignores the true answer.

    The hallucinator draws a private belief B independent of A, writes noisy
    codes of B, and answers B with probability ``commitment`` (uniform
    otherwise). Its own answer entropy falls along its traces, but under the
    coupling of its traces with the true answers the prefixes carry no
    information about A.
    """
    nq, nc, na = (int(s) for s in sizes)
    if min(nq, nc, na) < 2 or horizon < 1:
        raise ValidationError("misaligned worlds need alphabet sizes >= 2 and horizon >= 1")
    if not 0 < strength < 1 or not 0 < commitment <= 1:
        raise ValidationError("need 0 < strength < 1 and 0 < commitment <= 1")
    _check_dims(nq, nc, na, horizon)
    rng = np.random.default_rng(seed)
    pq = rng.dirichlet(np.full(nq, 4.0))
    pa = rng.dirichlet(np.full(na, answer_concentration), size=nq)
    belief = rng.dirichlet(np.full(na, answer_concentration), size=nq)
    ch = _channel(rng, nq, nc, na, horizon, strength, resolution, code)
    traces = _trace_given_latent(ch, nc, horizon)                     # (nq, nb, C...)
    kernel = commitment * np.eye(na) + (1.0 - commitment) / na        # (nb, na)

    bshape = (nq, na) + (1,) * horizon
    trace_q = (traces * belief.reshape(bshape)).sum(axis=1)           # h(C | q)
    # h(q, c, a) = p(q) sum_b pi(b|q) h(c|b) kernel(a|b)
    weighted = traces * (pq[:, None] * belief).reshape(bshape)
    h = np.tensordot(np.moveaxis(weighted, 1, -1), kernel, axes=([-1], [0]))
    alph = default_alphabets(nq, nc, na)
    params = {"generator": "misaligned", "seed": seed, "sizes": [nq, nc, na], "horizon": horizon,
              "strength": strength, "commitment": commitment, "resolution": resolution,
              "answer_concentration": answer_concentration, "code": code}
    hallucinator = TabularAutoregressiveModel.from_joint(
        ExactJoint(*alph, horizon, h / h.sum(), params))
    truth_mass = trace_q[..., None] * (pq[:, None] * pa).reshape((nq,) + (1,) * horizon + (na,))
    truth = ExactJoint(*alph, horizon, truth_mass / truth_mass.sum(), params)
    return MisalignedWorld(truth, hallucinator)


def generate_world(params: dict[str, Any]):
    """Rebuild a world from the ``params`` recorded by a generator."""
    p = dict(params)
    kind = p.pop("generator")
    if kind == "aligned":
        return generate_aligned_world(**p)
    if kind == "misaligned":
        return generate_misaligned_world(**p)
    raise ValidationError(f"unknown generator {kind!r}")


def random_joint(rng: np.random.Generator, nq: int, nc: int, na: int, horizon: int,
                 concentration: float = 1.0) -> ExactJoint:
    """Dirichlet-random dense world, for identity and bound batteries."""
    shape = (nq,) + (nc,) * horizon + (na,)
    mass = rng.dirichlet(np.full(int(np.prod(shape)), concentration)).reshape(shape)
    return ExactJoint(*default_alphabets(nq, nc, na), horizon, mass)


# -- exact quantities ----------------------------------------------------------

class PrefixQuantities(NamedTuple):
    h_answer: float            # H(A | Q)
    h_answer_prefix: float     # H(A | Q, C<=k)
    information: float         # I(A; C<=k | Q)
    step_informations: list[float]  # I(A; C_t | Q, C<t), t = 1..k


def exact_prefix_quantities(j: ExactJoint, k: int) -> PrefixQuantities:
    pre = j.prefix(k)
    t = j.table
    h_a = it.conditional_entropy(t, "A", ["Q"])
    h_ak = it.conditional_entropy(t, "A", ["Q"] + pre)
    info = it.conditional_mutual_information(t, "A", pre, ["Q"]) if pre else 0.0
    steps = [it.conditional_mutual_information(t, "A", [pre[s]], ["Q"] + pre[:s]) for s in range(k)]
    return PrefixQuantities(h_a, h_ak, info, steps)


def bayes_error(j: ExactJoint, k: int) -> float:
    """Error of the MAP predictor of A from (Q, C<=k)."""
    m = j.table.marginal(["Q"] + j.prefix(k) + ["A"])
    return float(1.0 - m.max(axis=-1).sum())


def sample_sequences(j: ExactJoint, n: int, seed: int) -> np.ndarray:
    """i.i.d. draws from the world as an int array of shape (n, K + 2)."""
    if n < 0:
        raise ValidationError("n must be non-negative")
    if n == 0:
        return np.zeros((0, j.horizon + 2), dtype=np.int64)
    rng = np.random.default_rng(seed)
    flat = j.mass.reshape(-1)
    idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
    return np.stack(np.unravel_index(idx, j.mass.shape), axis=1).astype(np.int64)


def pointwise_gains(j: ExactJoint, samples: np.ndarray, k: int) -> np.ndarray:
    """Delta_k = h(a | q, c<k) - h(a | q, c<=k) evaluated at each sample."""
    if not 1 <= k <= j.horizon:
        raise ValidationError(f"step {k} outside [1, {j.horizon}]")
    before, after = j.posterior(k - 1), j.posterior(k)
    q, c, a = samples[:, 0], samples[:, 1:-1], samples[:, -1]
    pb = before[(q, *c[:, :k - 1].T, a)]
    pa = after[(q, *c[:, :k].T, a)]
    return np.log(pa) - np.log(pb)


def mle_fit(samples: np.ndarray, smoothing_alpha: float = 0.5,
            sizes: Sequence[int] | None = None, horizon: int | None = None,
            alphabets: Sequence[Sequence[str]] | None = None) -> TabularAutoregressiveModel:
    """Count-based maximum-likelihood fit with additive smoothing.

    Each row is (count + alpha) / (total + alpha * width); with alpha = 0 a
    context that was never observed gets the uniform row.
    """
    samples = np.asarray(samples, dtype=np.int64)
    if smoothing_alpha < 0:
        raise FitError("smoothing_alpha must be non-negative")
    if len(samples) == 0 and smoothing_alpha == 0:
        raise FitError("cannot fit an unsmoothed model to an empty sample")
    if alphabets is not None:
        sizes = tuple(len(a) for a in alphabets)
    if sizes is None:
        raise FitError("alphabet sizes are required")
    nq, nc, na = (int(s) for s in sizes)
    k = samples.shape[1] - 2 if horizon is None else horizon
    if samples.size and samples.shape[1] != k + 2:
        raise FitError(f"samples have {samples.shape[1]} columns, expected {k + 2}")
    counts = np.zeros((nq,) + (nc,) * k + (na,))
    if len(samples):
        np.add.at(counts, tuple(samples.T), 1.0)

    def _rows(c: np.ndarray) -> np.ndarray:
        return _normalize_rows(c + smoothing_alpha)

    steps = tuple(_rows(counts.sum(axis=tuple(range(t + 2, k + 2)))) for t in range(k))
    qm = _rows(counts.reshape(nq, -1).sum(axis=1))
    alph = tuple(tuple(a) for a in alphabets) if alphabets is not None else default_alphabets(nq, nc, na)
    return TabularAutoregressiveModel(*alph, qm, steps, _rows(counts), float(smoothing_alpha))


@dataclass(frozen=True)
class TransferCheckReport:
    k: int
    i_r: float
    i_model: float
    kl_joint: float
    continuity_bound: float
    epsilon_k: float
    half_epsilon_satisfied: bool
    bound_valid: bool
    within_bound: bool

    @property
    def gap(self) -> float:
        return abs(self.i_r - self.i_model)


def transfer_check(r: ExactJoint, model: TabularAutoregressiveModel, k: int) -> TransferCheckReport:
    """Compare prefix information under the data world and a fitted model."""
    if (r.q_alphabet, r.c_alphabet, r.a_alphabet) != (model.q_alphabet, model.c_alphabet, model.a_alphabet) \
            or r.horizon != model.horizon:
        raise ValidationError("model alphabets do not match the world")
    if not 1 <= k <= r.horizon:
        raise ValidationError(f"step {k} outside [1, {r.horizon}]")
    mj = model.as_exact_joint()
    i_r = exact_prefix_quantities(r, k).information
    i_m = exact_prefix_quantities(mj, k).information
    delta = it.kl_divergence(r.mass, mj.mass)
    nq, nc, na = r.sizes
    bound = it.cmi_continuity_bound(delta, nq, nc**k, na) if math.isfinite(delta) else it.INF
    valid = math.isfinite(bound)
    gap = abs(i_r - i_m)
    return TransferCheckReport(k, i_r, i_m, delta, bound, i_r, i_m >= i_r / 2, valid,
                               (gap <= bound + it.IDENTITY_TOL) if valid else True)


def save_world(path, world: ExactJoint) -> None:
    with open(path, "w") as fh:
        json.dump(world.to_dict(), fh)


def load_world(path) -> ExactJoint:
    with open(path) as fh:
        return ExactJoint.from_dict(json.load(fh))
