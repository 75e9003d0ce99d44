"""Exact information-theoretic quantities on explicit finite probability tables.

All quantities are in nats. ``0 log 0`` is taken as 0 everywhere. Infinite
values (zero-mass outcomes, absolute-continuity failures) are ``math.inf``;
indeterminate differences such as ``inf - inf`` are ``math.nan`` and can be
tested with :func:`is_undefined`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

MASS_TOL = 1e-9
IDENTITY_TOL = 1e-12
MAX_CELLS = 10**7

INF = math.inf
UNDEFINED = math.nan


class ValidationError(ValueError):
    """Raised for malformed distributions, shapes or axis specifications."""


class DomainError(ValueError):
    """Raised when a bound is evaluated outside its mathematical domain."""


def is_undefined(x: float) -> bool:
    return isinstance(x, float) and math.isnan(x)


def _check_mass(mass: np.ndarray, tol: float) -> None:
    if mass.size == 0:
        raise ValidationError("distribution has empty support")
    if not np.all(np.isfinite(mass)):
        raise ValidationError("distribution contains non-finite mass")
    if np.any(mass < 0):
        raise ValidationError(f"negative mass {mass.min()!r}")
    total = float(mass.sum())
    if abs(total - 1.0) > tol:
        raise ValidationError(f"mass sums to {total!r}, expected 1 within {tol:g}")


@dataclass(frozen=True, eq=False)
class ProbDist:
    """Distribution over a finite alphabet, optionally with symbol labels."""

    mass: np.ndarray
    labels: tuple[str, ...] | None = None
    tol: float = field(default=MASS_TOL, repr=False)

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        _check_mass(mass, self.tol)
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != mass.size:
                raise ValidationError("labels do not match support size")
            object.__setattr__(self, "labels", labels)

    @property
    def support_size(self) -> int:
        return int(self.mass.size)

    def index(self, outcome: int | str) -> int:
        if isinstance(outcome, (int, np.integer)) and not isinstance(outcome, bool):
            if not 0 <= outcome < self.support_size:
                raise ValidationError(f"outcome {outcome} outside alphabet of size {self.support_size}")
            return int(outcome)
        if self.labels is None or outcome not in self.labels:
            raise ValidationError(f"outcome {outcome!r} not in alphabet")
        return self.labels.index(outcome)

    def prob(self, outcome: int | str) -> float:
        return float(self.mass[self.index(outcome)])

    @classmethod
    def uniform(cls, m: int) -> "ProbDist":
        return cls(np.full(m, 1.0 / m))


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense joint pmf with one named axis per variable."""

    axes: tuple[str, ...]
    mass: np.ndarray
    tol: float = field(default=MASS_TOL, repr=False)
    max_cells: int = field(default=MAX_CELLS, repr=False)

    def __post_init__(self):
        axes = tuple(self.axes)
        mass = np.asarray(self.mass, dtype=float)
        if len(set(axes)) != len(axes):
            raise ValidationError(f"duplicate axis names in {axes}")
        if mass.ndim != len(axes):
            raise ValidationError(f"{len(axes)} axes named but table has {mass.ndim} dimensions")
        if mass.size > self.max_cells:
            raise ValidationError(f"table has {mass.size} cells, cap is {self.max_cells}")
        _check_mass(mass, self.tol)
        mass.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "mass", mass)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mass.shape

    def size_of(self, axis: str) -> int:
        return self.mass.shape[self._pos(axis)]

    def _pos(self, axis: str) -> int:
        try:
            return self.axes.index(axis)
        except ValueError:
            raise ValidationError(f"unknown axis {axis!r}; have {self.axes}") from None

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Marginal mass over ``keep`` with axes in the order given."""
        keep = list(keep)
        pos = [self._pos(a) for a in keep]
        drop = tuple(i for i in range(len(self.axes)) if i not in pos)
        m = self.mass.sum(axis=drop) if drop else self.mass
        # remaining axes are in original order; permute to requested order
        remaining = [i for i in range(len(self.axes)) if i in pos]
        return np.transpose(m, [remaining.index(p) for p in pos])

    def marginal_table(self, keep: Sequence[str]) -> "JointTable":
        return JointTable(tuple(keep), self.marginal(keep), tol=self.tol, max_cells=self.max_cells)


Dist = Union[ProbDist, JointTable, np.ndarray, Sequence[float]]


def _as_array(d: Dist) -> np.ndarray:
    if isinstance(d, (ProbDist, JointTable)):
        return d.mass
    arr = np.asarray(d, dtype=float)
    _check_mass(arr, MASS_TOL)
    return arr


def _axes(spec: str | Sequence[str]) -> list[str]:
    return [spec] if isinstance(spec, str) else list(spec)


def _plogp_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum()) + 0.0


def entropy(d: Dist) -> float:
    """Shannon entropy in nats."""
    return _plogp_sum(_as_array(d).reshape(-1))


def joint_entropy(j: JointTable, axes: str | Sequence[str]) -> float:
    axes = _axes(axes)
    if not axes:
        return 0.0
    return _plogp_sum(j.marginal(axes).reshape(-1))


def conditional_entropy(j: JointTable, target_axis: str | Sequence[str],
                        given_axes: str | Sequence[str] = ()) -> float:
    """H(target | given) = -sum p(x, y) log p(x, y) / p(x)."""
    target, given = _axes(target_axis), _axes(given_axes)
    if not target:
        raise ValidationError("target axes are empty")
    if set(target) & set(given):
        raise ValidationError(f"target {target} overlaps conditioning set {given}")
    if len(set(target)) != len(target) or len(set(given)) != len(given):
        raise ValidationError("repeated axis in specification")
    pxy = j.marginal(given + target)
    if not given:
        return _plogp_sum(pxy.reshape(-1))
    px = pxy.sum(axis=tuple(range(len(given), pxy.ndim)), keepdims=True)
    px = np.broadcast_to(px, pxy.shape)
    nz = pxy > 0
    return float(-(pxy[nz] * np.log(pxy[nz] / px[nz])).sum())


def mutual_information(j: JointTable, a_axis: str | Sequence[str], b_axis: str | Sequence[str]) -> float:
    return conditional_mutual_information(j, a_axis, b_axis, ())


def conditional_mutual_information(j: JointTable, a_axis: str | Sequence[str],
                                   b_axes: str | Sequence[str],
                                   given_axes: str | Sequence[str] = ()) -> float:
    """I(A; B | G) = H(A | G) - H(A | G, B)."""
    a, b, g = _axes(a_axis), _axes(b_axes), _axes(given_axes)
    if not a or not b:
        raise ValidationError("both variable groups must be non-empty")
    groups = a + b + g
    if len(set(groups)) != len(groups):
        raise ValidationError(f"axis groups {a}, {b}, {g} are not disjoint")
    return conditional_entropy(j, a, g) - conditional_entropy(j, a, g + b)


def _pair(p: Dist, q: Dist) -> tuple[np.ndarray, np.ndarray]:
    pa, qa = _as_array(p), _as_array(q)
    if pa.shape != qa.shape:
        raise ValidationError(f"shape mismatch {pa.shape} vs {qa.shape}")
    return pa, qa


def _kl_arrays(p: np.ndarray, q: np.ndarray) -> float:
    nz = p > 0
    if np.any(q[nz] == 0):
        return INF
    return float((p[nz] * (np.log(p[nz]) - np.log(q[nz]))).sum())


def kl_divergence(p: Dist, q: Dist) -> float:
    """KL(p || q); ``inf`` when q puts zero mass where p does not."""
    return _kl_arrays(*_pair(p, q))


def total_variation(p: Dist, q: Dist) -> float:
    pa, qa = _pair(p, q)
    return float(0.5 * np.abs(pa - qa).sum())


def pointwise_surprisal(d: ProbDist, outcome: int | str) -> float:
    m = d.prob(outcome)
    return INF if m == 0 else -math.log(m)


def stepwise_gain(before: ProbDist, after: ProbDist, outcome: int | str) -> float:
    """Drop in surprisal of ``outcome`` from ``before`` to ``after``.

    Positive when the step makes the outcome more probable. ``inf - inf`` is
    undefined (nan).
    """
    return pointwise_surprisal(before, outcome) - pointwise_surprisal(after, outcome)


def cumulative_gain(posteriors: Sequence[ProbDist], outcome: int | str) -> list[float]:
    """G_k = h(outcome | prefix-free) - h(outcome | prefix k), with G_0 = 0."""
    if not posteriors:
        raise ValidationError("need at least the prefix-free posterior")
    h = [pointwise_surprisal(p, outcome) for p in posteriors]
    h0 = h[0]
    out = [h0 - hk for hk in h]
    out[0] = 0.0 if math.isfinite(h0) else UNDEFINED
    return out


def binary_entropy(eps: float) -> float:
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"binary entropy needs eps in [0, 1], got {eps}")
    return entropy([eps, 1.0 - eps])


def pinsker_tv_bound(kl: float) -> float:
    if kl < 0:
        raise DomainError(f"KL must be non-negative, got {kl}")
    return math.sqrt(kl / 2.0)


def entropy_continuity_valid(delta: float, m: int) -> bool:
    """Whether the Pinsker + Fannes-Audenaert chain applies for KL <= delta."""
    if m == 1:
        return True
    return math.sqrt(delta / 2.0) <= 1.0 - 1.0 / m


def entropy_continuity_bound(delta: float, m: int) -> float:
    """sqrt(delta/2) log(m-1) + h2(sqrt(delta/2)); ``inf`` outside the valid range.

    Bounds |H(P) - H(Q)| for distributions on an m-symbol alphabet with
    KL(P || Q) <= delta.
    """
    if m < 1:
        raise DomainError(f"alphabet size must be >= 1, got {m}")
    if delta < 0 or math.isnan(delta):
        raise DomainError(f"delta must be non-negative, got {delta}")
    if m == 1:
        return 0.0  # every distribution on one symbol has zero entropy
    if math.isinf(delta) or not entropy_continuity_valid(delta, m):
        return INF
    eps = math.sqrt(delta / 2.0)
    return eps * math.log(m - 1) + binary_entropy(eps)


def cond_entropy_continuity_bound(delta: float, m_x: int, m_y: int) -> float:
    """f_{X x Y}(delta) + f_X(delta), bounding |H_P(Y|X) - H_Q(Y|X)|."""
    return entropy_continuity_bound(delta, m_x * m_y) + entropy_continuity_bound(delta, m_x)


def cmi_continuity_bound(delta: float, m_q: int, m_prefix: int, m_a: int) -> float:
    """Bound on |I_r(A; C<=k | Q) - I_p(A; C<=k | Q)| when KL(r || p) <= delta.

    ``m_prefix`` is the size of the joint prefix alphabet (|C|**k for k steps).
    Sum of the conditional-entropy bounds for H(A|Q) and H(A|Q, C<=k).
    """
    return (cond_entropy_continuity_bound(delta, m_q, m_a)
            + cond_entropy_continuity_bound(delta, m_q * m_prefix, m_a))


def fano_error_lower_bound(h_cond: float, m: int) -> float:
    """Lower bound on Bayes error from H(A | Y) for an m-ary answer."""
    if m <= 2:
        raise DomainError(f"Fano bound needs more than 2 answers, got {m}")
    return max(0.0, (h_cond - math.log(2)) / math.log(m - 1))


class CrossEntropyParts(NamedTuple):
    cross_entropy: float
    entropy_r: float
    kl: float


def cross_entropy_decomposition(r: Dist, p: Dist) -> CrossEntropyParts:
    """Split E_r[-log p] into H(r) + KL(r || p)."""
    ra, pa = _pair(r, p)
    nz = ra > 0
    h = _plogp_sum(ra.reshape(-1))
    if np.any(pa[nz] == 0):
        return CrossEntropyParts(INF, h, INF)
    ce = float(-(ra[nz] * np.log(pa[nz])).sum())
    return CrossEntropyParts(ce, h, _kl_arrays(ra, pa))


class KLChainParts(NamedTuple):
    joint_kl: float
    marginal_kl: float
    expected_conditional_kl: float


def kl_chain_decomposition(r: JointTable, p: JointTable, prefix_axes: Sequence[str],
                           tail_axis: str | Sequence[str],
                           given_axes: str | Sequence[str] = ()) -> KLChainParts:
    """Split KL(r(C, A | G) || p(C, A | G)) into the prefix marginal term and
    the r-expected KL between the tail conditionals.

    Each term is averaged over r(G). G values with zero r-mass contribute 0.
    """
    if r.axes != p.axes or r.shape != p.shape:
        raise ValidationError("r and p must share axes and shape")
    c, a, g = list(prefix_axes), _axes(tail_axis), _axes(given_axes)
    order = g + c + a
    if len(set(order)) != len(order):
        raise ValidationError("axis groups overlap")
    rt, pt = r.marginal(order), p.marginal(order)
    ng, nc = len(g), len(c)
    gsum = tuple(range(ng, rt.ndim))
    asum = tuple(range(ng + nc, rt.ndim))

    def _cond(t, axes):
        denom = t.sum(axis=axes, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom > 0, t / np.where(denom > 0, denom, 1.0), 0.0)

    r_cag, p_cag = _cond(rt, gsum), _cond(pt, gsum)                     # (C, A | G)
    r_c, p_c = rt.sum(axis=asum, keepdims=True), pt.sum(axis=asum, keepdims=True)
    r_cg, p_cg = _cond(r_c, gsum), _cond(p_c, gsum)                      # (C | G)
    r_a, p_a = _cond(rt, asum), _cond(pt, asum)                          # (A | G, C)
    rg = rt.sum(axis=gsum, keepdims=True)

    def _weighted_kl(weight, num, den):
        nz = (weight > 0) & (num > 0)
        w = np.broadcast_to(weight, num.shape)
        if np.any(den[nz] == 0):
            return INF
        return float((w[nz] * num[nz] * np.log(num[nz] / den[nz])).sum())

    joint = _weighted_kl(rg, r_cag, p_cag)
    marg = _weighted_kl(rg, r_cg, p_cg)
    cond = _weighted_kl(rt.sum(axis=asum, keepdims=True), r_a, p_a)
    return KLChainParts(joint, marg, cond)
