"""Driving measures and the finite-rate embedded event chain.

Only events that colour at least two vertices can change the partition,
and for every supported measure their total rate is finite, so the
simulator draws those candidate events directly instead of thinning an
infinite-intensity point process.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln

from .specfun import QuadratureSpec, log_one_minus, singular_integral

__all__ = [
    "BetaDirac",
    "GeneralProduct",
    "EdgewiseOnly",
    "ThetaMeasure",
    "EventSample",
    "UCdfTable",
    "ZeroRateError",
    "measure_from_dict",
    "measure_to_dict",
    "effective_event_rate",
    "merger_rate",
    "colored_count_weights",
    "binomial_tail_weights",
    "sample_event",
    "sample_binomial_at_least_two",
    "tabulate_u_cdf",
    "tilted_density",
]


class ZeroRateError(ValueError):
    """No candidate events can occur."""


@dataclass(frozen=True)
class BetaDirac:
    """Beta(alpha, beta) colouring law with q = 1, density u^(a-1)(1-u)^(b-1)."""

    alpha: float
    beta: float
    theta: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0,1), got {self.alpha!r}")
        if not self.beta > 0.0:
            raise ValueError(f"beta must be > 0, got {self.beta!r}")
        if not self.theta >= 0.0:
            raise ValueError("theta must be >= 0")


@dataclass(frozen=True)
class GeneralProduct:
    """Finite list of (weight, u, q) atoms plus an optional edgewise rate."""

    atoms: tuple = field(default=())
    theta: float = 0.0

    def __post_init__(self):
        atoms = tuple(tuple(float(x) for x in a) for a in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for a in atoms:
            if len(a) != 3:
                raise ValueError("atoms are (weight, u, q) triples")
            w, u, q = a
            if not (w > 0 and 0 < u <= 1 and 0 < q <= 1):
                raise ValueError(f"invalid atom {a!r}")
        if not self.theta >= 0.0:
            raise ValueError("theta must be >= 0")
        if not atoms and self.theta == 0.0:
            raise ValueError("GeneralProduct needs at least one atom or theta > 0")


@dataclass(frozen=True)
class EdgewiseOnly:
    theta: float

    def __post_init__(self):
        if not self.theta >= 0.0:
            raise ValueError("theta must be >= 0")


ThetaMeasure = Union[BetaDirac, GeneralProduct, EdgewiseOnly]


def measure_from_dict(d: dict) -> ThetaMeasure:
    kind = d.get("type")
    theta = float(d.get("theta", 0.0))
    if kind == "beta_dirac":
        return BetaDirac(float(d["alpha"]), float(d["beta"]), theta)
    if kind == "atoms":
        return GeneralProduct(tuple(tuple(a) for a in d["atoms"]), theta)
    if kind == "edgewise":
        return EdgewiseOnly(theta)
    raise ValueError(f"unknown measure type {kind!r}")


def measure_to_dict(m: ThetaMeasure) -> dict:
    if isinstance(m, BetaDirac):
        return {"type": "beta_dirac", "alpha": m.alpha, "beta": m.beta, "theta": m.theta}
    if isinstance(m, GeneralProduct):
        return {"type": "atoms", "atoms": [list(a) for a in m.atoms], "theta": m.theta}
    return {"type": "edgewise", "theta": m.theta}


@dataclass(frozen=True)
class EventSample:
    u: float
    q: float
    colored_count: int
    kind: str  # "merger" or "pair"


# ---------------------------------------------------------------------------
# rates


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def colored_count_weights(measure: BetaDirac, n: int) -> np.ndarray:
    """Unnormalised law of the coloured count K = 2..n for a Beta measure.

    Entry k-2 is C(n,k) B(k+a-2, n-k+b), the rate of candidate events
    colouring exactly k vertices.
    """
    if n < 2:
        return np.zeros(0)
    a, b = measure.alpha, measure.beta
    k = np.arange(2, n + 1, dtype=float)
    logw = _log_binom(n, k) + gammaln(k + a - 2) + gammaln(n - k + b) - gammaln(n + a - 2 + b)
    return np.exp(logw)


def binomial_tail_weights(n: int, u: float) -> np.ndarray:
    """Bin(n, u) pmf at k = 2..n (trailing negligible mass trimmed)."""
    if n < 2:
        return np.zeros(0)
    k = np.arange(2, n + 1, dtype=float)
    if u >= 1.0:
        w = np.zeros(n - 1)
        w[-1] = 1.0
        return w
    logp = _log_binom(n, k) + k * math.log(u) + (n - k) * math.log1p(-u)
    w = np.exp(logp)
    nz = np.nonzero(w)[0]
    return w[: nz[-1] + 1] if len(nz) else w[:1]


def _p_at_least_two(n: int, u: float) -> float:
    if n < 2:
        return 0.0
    if u >= 1.0:
        return 1.0
    # 1 - (1-u)^n - n u (1-u)^(n-1), with care for small n*u
    l1 = math.log1p(-u)
    p0 = math.exp(n * l1)
    p1 = n * u * math.exp((n - 1) * l1)
    val = 1.0 - p0 - p1
    if n * u < 1e-3:
        val = float(binomial_tail_weights(n, u).sum())
    return max(val, 0.0)


def merger_rate(measure: ThetaMeasure, n: int) -> float:
    """Natural-time rate of candidate mergers (>= 2 coloured vertices)."""
    if isinstance(measure, BetaDirac):
        return float(colored_count_weights(measure, n).sum())
    if isinstance(measure, GeneralProduct):
        return float(sum(w * _p_at_least_two(n, u) / u**2 for w, u, _ in measure.atoms))
    return 0.0


def _rate_parts(measure: ThetaMeasure, n: int, rescale: bool):
    if rescale and not isinstance(measure, BetaDirac):
        raise ValueError("rescaled time is only defined for the Beta measure")
    merge = merger_rate(measure, n)
    if rescale:
        merge *= float(n) ** (measure.alpha - 1.0)
    pair = measure.theta * n * (n - 1) / 2.0
    return merge, pair


def effective_event_rate(measure: ThetaMeasure, n: int, rescale: bool = False) -> float:
    """Total rate of candidate events on n vertices."""
    if n < 1:
        raise ValueError("n must be >= 1")
    merge, pair = _rate_parts(measure, n, rescale)
    return merge + pair


# ---------------------------------------------------------------------------
# the tilted u-law


def tilted_density(measure: BetaDirac, n: int, u, v=None):
    """Unnormalised density of u for candidate events: P(Bin(n,u) >= 2) u^(a-3) (1-u)^(b-1)."""
    u = np.asarray(u, dtype=float)
    v = 1.0 - u if v is None else np.asarray(v, dtype=float)
    lv = log_one_minus(u, v)
    small = n * u < 1e-3
    big = ~small
    # P(Bin(n,u) >= 2) / u^2, kept finite for tiny u
    tail2 = np.zeros_like(u)
    ub, lb = u[big], lv[big]
    tail2[big] = (1.0 - np.exp(n * lb) - n * ub * np.exp((n - 1) * lb)) / ub**2
    if np.any(small):
        us = u[small]
        r = us / v[small]
        tail2[small] = 0.5 * n * (n - 1) * np.exp((n - 2) * lv[small]) * (
            1 + (n - 2) * r / 3 + (n - 2) * (n - 3) * r**2 / 12)
    return tail2 * u ** (measure.alpha - 1.0) * np.exp((measure.beta - 1.0) * lv)


@dataclass(frozen=True)
class UCdfTable:
    probs: np.ndarray
    knots: np.ndarray
    discrete: bool = False

    def sample(self, p: float) -> float:
        """Inverse CDF at p in [0, 1)."""
        j = int(np.searchsorted(self.probs, p, side="right"))
        if self.discrete:
            return float(self.knots[min(j, len(self.knots) - 1)])
        j = min(max(j, 1), len(self.probs) - 1)
        p0, p1 = self.probs[j - 1], self.probs[j]
        u0, u1 = self.knots[j - 1], self.knots[j]
        if p1 <= p0:
            return float(u0)
        return float(u0 + (p - p0) / (p1 - p0) * (u1 - u0))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _interval_masses(measure, n, knots):
    """Mass of the tilted density between consecutive knots."""
    a, b = knots[:-1], knots[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    v = (1.0 - mid)[:, None] - half[:, None] * _GL_X[None, :]
    vals = tilted_density(measure, n, u, v)
    masses = (vals * _GL_W[None, :]).sum(axis=1) * half
    # endpoint pieces carry integrable singularities: integrate them exactly
    e0 = measure.alpha - 1.0
    masses[0] = singular_integral(
        lambda s, sc: tilted_density(measure, n, knots[1] * s, 1.0 - knots[1] * s) * knots[1],
        e0, complement=True)
    if measure.beta < 1.0:
        lo = knots[-2]
        w = 1.0 - lo
        masses[-1] = singular_integral(
            lambda s, sc: tilted_density(measure, n, 1.0 - w * s, w * s) * w,
            measure.beta - 1.0, complement=True)
    return masses


@lru_cache(maxsize=64)
def tabulate_u_cdf(measure: ThetaMeasure, n: int, grid_size: int = 4096) -> UCdfTable:
    """Inverse-CDF table for the tilted u-law of candidate mergers.

    Knots are geometric towards both ends of (0,1); intervals holding
    more than twice their share of mass are bisected until the budget
    is used up.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    if isinstance(measure, GeneralProduct):
        if not measure.atoms:
            raise ZeroRateError("no atoms")
        rates = np.array([w * _p_at_least_two(n, u) / u**2 for w, u, _ in measure.atoms])
        us = np.array([u for _, u, _ in measure.atoms])
        order = np.argsort(us, kind="stable")
        us, rates = us[order], rates[order]
        if rates.sum() <= 0:
            raise ZeroRateError("merger rate is zero")
        probs = np.cumsum(rates) / rates.sum()
        probs[-1] = 1.0
        return UCdfTable(probs, us, discrete=True)
    if not isinstance(measure, BetaDirac):
        raise ValueError("u-table needs a Beta or atom measure")
    if n < 2:
        raise ZeroRateError("n < 2: no mergers")
    base = grid_size // 2
    lo = min(1e-3 / n, 1e-6)
    left = np.geomspace(lo, 0.5, base // 2 + 1)
    right = 1.0 - np.geomspace(lo, 0.5, base // 2 + 1)[::-1]
    knots = np.unique(np.concatenate([[0.0], left, right[1:], [1.0]]))
    masses = _interval_masses(measure, n, knots)
    while len(knots) < grid_size:
        share = masses / masses.sum()
        budget = grid_size - len(knots)
        heavy = np.nonzero(share > 2.0 / grid_size)[0]
        heavy = heavy[(heavy > 0) & (heavy < len(masses) - 1)]
        if len(heavy) == 0:
            heavy = np.argsort(share[1:-1])[::-1][:budget] + 1
        heavy = heavy[:budget]
        if len(heavy) == 0:
            break
        mids = 0.5 * (knots[heavy] + knots[heavy + 1])
        knots = np.sort(np.concatenate([knots, mids]))
        masses = _interval_masses(measure, n, knots)
    cdf = np.concatenate([[0.0], np.cumsum(masses)])
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return UCdfTable(cdf, knots)


# ---------------------------------------------------------------------------
# event sampling


def sample_binomial_at_least_two(n: int, u: float, rng: np.random.Generator) -> int:
    """Bin(n, u) conditioned on >= 2."""
    if n < 2:
        raise ValueError("need n >= 2")
    if u >= 1.0:
        return n
    if _p_at_least_two(n, u) > 0.25:
        while True:
            k = int(rng.binomial(n, u))
            if k >= 2:
                return k
    w = binomial_tail_weights(n, u)
    cum = np.cumsum(w)
    return 2 + int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


@lru_cache(maxsize=64)
def _k_cdf(measure: BetaDirac, n: int) -> np.ndarray:
    w = colored_count_weights(measure, n)
    return np.cumsum(w)


def sample_event(measure: ThetaMeasure, n: int, rng: np.random.Generator,
                 rescale: bool = False, method: str = "exact") -> EventSample:
    """Draw one candidate event.

    ``method="exact"`` draws K from its marginal and then u | K, which is
    Beta(K+a-2, n-K+b) for the Beta measure; ``method="table"`` draws u
    from the tabulated tilted law and then K ~ Bin(n,u) | K >= 2.
    """
    merge, pair = _rate_parts(measure, n, rescale)
    total = merge + pair
    if not total > 0:
        raise ZeroRateError(f"no candidate events for n={n}")
    if rng.random() * total >= merge:
        return EventSample(0.0, 1.0, 2, "pair")
    if isinstance(measure, BetaDirac):
        if method == "table":
            u = tabulate_u_cdf(measure, n).sample(rng.random())
            return EventSample(u, 1.0, sample_binomial_at_least_two(n, u, rng), "merger")
        cum = _k_cdf(measure, n)
        k = 2 + int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        k = min(k, n)
        u = float(rng.beta(k + measure.alpha - 2.0, n - k + measure.beta))
        return EventSample(u, 1.0, k, "merger")
    rates = np.array([w * _p_at_least_two(n, u) / u**2 for w, u, _ in measure.atoms])
    j = int(np.searchsorted(np.cumsum(rates), rng.random() * rates.sum(), side="right"))
    j = min(j, len(rates) - 1)
    _, u, q = measure.atoms[j]
    return EventSample(u, q, sample_binomial_at_least_two(n, u, rng), "merger")


def u_table_quadrature_check(measure: BetaDirac, n: int, spec: QuadratureSpec | None = None) -> float:
    """Total tilted mass by one quadrature, for comparison with the K-sum."""
    bps = [x / n for x in (0.5, 4.0, 32.0) if x / n < 1]
    return singular_integral(lambda u, v: tilted_density(measure, n, u, v), measure.alpha - 1.0,
                             spec, breakpoints=bps, complement=True)
