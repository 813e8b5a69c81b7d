"""Exact law of the social-bubble profile given the block-size spectrum.

Sprinkle m0 marks uniformly on n vertices and count, for each size i,
the blocks of size i that received a mark.  With F_l the sum over the
marked blocks of independent uniforms on {1..i},

    P(profile = l) = prod_i C(c_i, l_i) i^l_i / C(n, m0)
                     * E[C(||l|| - F_l, m0 - |l|)] * 1{|l| <= m0 <= ||l||}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Mapping, Sequence

__all__ = [
    "DiscretePMF",
    "BubbleQuery",
    "f_ell_pmf",
    "bubble_profile_probability",
    "bubble_profile_bruteforce",
    "bubble_size_pmf",
    "bubble_size_bruteforce",
    "admissible_profiles",
    "spectrum_of_blocks",
]

MAX_BRUTE_N = 16


def _profile(d: Mapping[int, int]) -> tuple:
    """Canonical sparse form: sorted ((size, count), ...) with count > 0."""
    return tuple(sorted((int(s), int(k)) for s, k in dict(d).items() if k))


@dataclass(frozen=True)
class DiscretePMF:
    support: tuple
    probs: tuple

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.probs))

    def total(self):
        return sum(self.probs)


@dataclass(frozen=True)
class BubbleQuery:
    n: int
    m0: int
    ell: tuple  # sparse profile ((size, count), ...)
    c: tuple  # sparse spectrum ((size, count), ...)

    def __post_init__(self):
        ell, c = _profile(dict(self.ell)), _profile(dict(self.c))
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "c", c)
        cd = dict(c)
        if sum(s * k for s, k in c) != self.n:
            raise ValueError("spectrum does not sum to n")
        if any(s < 1 or k < 0 for s, k in c + ell):
            raise ValueError("sizes must be >= 1 and counts >= 0")
        if any(k > cd.get(s, 0) for s, k in ell):
            raise ValueError("profile exceeds the spectrum")
        if not 0 <= self.m0 <= self.n:
            raise ValueError("m0 must lie in [0, n]")


def _binom(a: int, b: int) -> int:
    if b < 0 or a < b:
        return 0
    return math.comb(a, b)


def f_ell_pmf(ell, exact: bool = True) -> DiscretePMF:
    """Law of F_l = sum over blocks of uniforms on {1..i}, by convolution."""
    one = Fraction(1) if exact else 1.0
    dist = {0: one}
    for size, count in _profile(dict(ell)):
        step = one / size
        for _ in range(count):
            new: dict = {}
            for x, p in dist.items():
                q = p * step
                for y in range(1, size + 1):
                    new[x + y] = new.get(x + y, 0) + q
            dist = new
    support = tuple(sorted(dist))
    return DiscretePMF(support, tuple(dist[s] for s in support))


def bubble_profile_probability(query: BubbleQuery, exact: bool = True):
    """Probability of the bubble profile ``query.ell``.

    Rational when ``exact``; otherwise a float built from log-binomials.
    """
    ell = query.ell
    k = sum(c for _, c in ell)
    norm = sum(s * c for s, c in ell)
    m0 = query.m0
    if not (k <= m0 <= norm):
        return Fraction(0) if exact else 0.0
    cd = dict(query.c)
    fl = f_ell_pmf(ell, exact)
    if exact:
        pre = Fraction(1)
        for s, c in ell:
            pre *= math.comb(cd[s], c) * s**c
        pre /= math.comb(query.n, m0)
        expect = sum(p * _binom(norm - f, m0 - k) for f, p in zip(fl.support, fl.probs))
        return pre * expect
    logpre = -_log_comb(query.n, m0)
    for s, c in ell:
        logpre += _log_comb(cd[s], c) + c * math.log(s)
    expect = 0.0
    for f, p in zip(fl.support, fl.probs):
        if norm - f >= m0 - k:
            expect += p * math.exp(_log_comb(norm - f, m0 - k) + logpre)
    return expect


def _log_comb(a: int, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def spectrum_of_blocks(blocks: Sequence[Sequence[int]]) -> tuple:
    counts: dict = {}
    for b in blocks:
        counts[len(b)] = counts.get(len(b), 0) + 1
    return _profile(counts)


def bubble_profile_bruteforce(blocks: Sequence[Sequence[int]], m0: int) -> dict:
    """Exact profile frequencies over all m0-subsets of the vertices."""
    n = sum(len(b) for b in blocks)
    if n > MAX_BRUTE_N:
        raise ValueError(f"brute force limited to n <= {MAX_BRUTE_N}")
    if not 0 <= m0 <= n:
        raise ValueError("m0 must lie in [0, n]")
    owner = {}
    for j, b in enumerate(blocks):
        for v in b:
            owner[v] = j
    sizes = [len(b) for b in blocks]
    tally: dict = {}
    total = 0
    for subset in combinations(sorted(owner), m0):
        hit = {owner[v] for v in subset}
        prof: dict = {}
        for j in hit:
            prof[sizes[j]] = prof.get(sizes[j], 0) + 1
        key = _profile(prof)
        tally[key] = tally.get(key, 0) + 1
        total += 1
    return {key: Fraction(v, total) for key, v in tally.items()}


def admissible_profiles(c, m0: int, mass: int | None = None):
    """Profiles l <= c with |l| <= m0 <= ||l|| (and ||l|| = mass if given)."""
    c = _profile(dict(c))
    sizes = [s for s, _ in c]
    caps = [k for _, k in c]
    out = []

    def rec(idx, cur, blocks, norm):
        if mass is not None and norm > mass:
            return
        if blocks > m0:
            return
        if idx == len(sizes):
            if blocks <= m0 <= norm and (mass is None or norm == mass):
                out.append(tuple((sizes[j], cur[j]) for j in range(len(sizes)) if cur[j]))
            return
        for take in range(caps[idx] + 1):
            cur.append(take)
            rec(idx + 1, cur, blocks + take, norm + take * sizes[idx])
            cur.pop()

    rec(0, [], 0, 0)
    return out


def bubble_size_pmf(c, m0: int, exact: bool = True) -> DiscretePMF:
    """Law of the bubble mass M = ||l|| given the spectrum ``c``."""
    c = _profile(dict(c))
    n = sum(s * k for s, k in c)
    dist: dict = {}
    for ell in admissible_profiles(c, m0):
        p = bubble_profile_probability(BubbleQuery(n, m0, ell, c), exact)
        if p:
            m = sum(s * k for s, k in ell)
            dist[m] = dist.get(m, 0) + p
    support = tuple(sorted(dist))
    return DiscretePMF(support, tuple(dist[m] for m in support))


def bubble_size_bruteforce(blocks, m0: int) -> dict:
    out: dict = {}
    for prof, p in bubble_profile_bruteforce(blocks, m0).items():
        m = sum(s * k for s, k in prof)
        out[m] = out.get(m, 0) + p
    return out
