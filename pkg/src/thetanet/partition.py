"""Partition of range(n) under (u,q)-mergers and pair merges.

Union-find with union by size and path compression, plus a full table
``counts[s]`` of the number of blocks of each size kept in step with
every merge.  The compiled and pure-Python event loops follow the same
conventions: the surviving root of a merge is the first largest
touched root, and for q < 1 the block pairs are visited in touched
order with one uniform draw per pair until everything is connected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PartitionState",
    "MergeReport",
    "RawStream",
    "new_partition",
    "apply_merger",
    "apply_pair_merge",
    "spectrum",
    "select_colored",
    "dump_partition",
    "parse_partition",
    "partition_from_blocks",
    "seed_bubble",
    "link_probability",
]

_TWO53 = 1.0 / 9007199254740992.0


class RawStream:
    """Uniforms and bounded integers from a numpy bit generator's raw
    64-bit output, in exactly the way the compiled kernel draws them."""

    def __init__(self, bit_generator, chunk: int = 4096):
        self.bit_generator = bit_generator
        self._chunk = chunk
        self._buf: list[int] = []
        self._pos = 0

    def raw(self) -> int:
        if self._pos >= len(self._buf):
            self._buf = self.bit_generator.random_raw(self._chunk).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def random(self) -> float:
        return (self.raw() >> 11) * _TWO53

    def below(self, m: int) -> int:
        """Uniform integer in [0, m) by masked rejection."""
        mask = (1 << (m - 1).bit_length()) - 1
        while True:
            x = self.raw() & mask
            if x < m:
                return x

    def flush(self):
        """Drop buffered values (the bit generator has moved past them)."""
        self._buf = []
        self._pos = 0


def _randbelow(rng, m: int) -> int:
    if hasattr(rng, "below"):
        return rng.below(m)
    return int(rng.integers(m))


@dataclass
class MergeReport:
    """Outcome of one event.

    ``groups`` lists (sizes_lost, size_gained) for every new block; a
    q < 1 merger can create several.  For the usual single merge
    ``sizes_lost`` and ``size_gained`` describe it directly.
    """

    groups: tuple = ()

    @property
    def silent(self) -> bool:
        return not self.groups

    @property
    def sizes_lost(self) -> tuple:
        return tuple(sorted(s for g in self.groups for s in g[0]))

    @property
    def size_gained(self):
        if len(self.groups) == 1:
            return self.groups[0][1]
        return None


@dataclass
class PartitionState:
    n: int
    parent: list
    size: list
    counts: list
    number_of_blocks: int
    edges: set | None = None
    in_bubble: list | None = None
    lam: list | None = None
    bubble_mass: int = 0
    _stamp: list = field(default_factory=list, repr=False)
    _tick: int = 0

    # -- union-find -------------------------------------------------------
    def find(self, v: int) -> int:
        parent = self.parent
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    def block_of(self, v: int) -> list:
        r = self.find(v)
        return [w for w in range(self.n) if self.find(w) == r]

    def blocks(self) -> list:
        out: dict[int, list] = {}
        for v in range(self.n):
            out.setdefault(self.find(v), []).append(v)
        return sorted(out.values())

    def merge_roots(self, roots: Sequence[int]) -> tuple:
        """Merge distinct roots; returns (sizes_lost, size_gained, target)."""
        size, counts = self.size, self.counts
        target = roots[0]
        total = 0
        for r in roots:
            total += size[r]
            if size[r] > size[target]:
                target = r
        flags = self.in_bubble
        any_b = flags is not None and any(flags[r] for r in roots)
        lost = []
        for r in roots:
            s = size[r]
            counts[s] -= 1
            lost.append(s)
            if any_b:
                if flags[r]:
                    self.lam[s] -= 1
                else:
                    self.bubble_mass += s
            if r != target:
                self.parent[r] = target
        size[target] = total
        counts[total] += 1
        if any_b:
            self.lam[total] += 1
            flags[target] = True
        self.number_of_blocks -= len(roots) - 1
        return tuple(lost), total, target

    def check(self):
        """Recount from scratch and compare with the maintained table."""
        recount = [0] * (self.n + 1)
        nb = 0
        for v in range(self.n):
            if self.find(v) == v:
                recount[self.size[v]] += 1
                nb += 1
        if recount != list(self.counts):
            raise AssertionError("count table out of sync")
        if nb != self.number_of_blocks or sum(s * c for s, c in enumerate(self.counts)) != self.n:
            raise AssertionError("mass or block count violated")


def new_partition(n: int, full_graph: bool = False) -> PartitionState:
    """All singletons.  ``full_graph`` keeps explicit edges (n <= 1000)."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if full_graph and n > 1000:
        raise ValueError("full-graph mode is limited to n <= 1000")
    counts = [0] * (n + 1)
    counts[1] = n
    return PartitionState(n, list(range(n)), [1] * n, counts, n,
                          edges=set() if full_graph else None, _stamp=[-1] * n)


def seed_bubble(state: PartitionState, m0: int, rng) -> list:
    """Start bubble tracking from a uniform sample S0 of m0 vertices.

    Must be called on the all-singleton partition.
    """
    if not 1 <= m0 <= state.n:
        raise ValueError(f"m0 must lie in [1, n], got {m0}")
    if state.number_of_blocks != state.n:
        raise ValueError("bubble tracking starts from singletons")
    s0 = select_colored(state, m0, rng)
    state.in_bubble = [False] * state.n
    state.lam = [0] * (state.n + 1)
    for v in s0:
        state.in_bubble[v] = True
    state.lam[1] = m0
    state.bubble_mass = m0
    return s0


def _check_ids(state: PartitionState, ids: Iterable[int]):
    for v in ids:
        if not 0 <= v < state.n:
            raise IndexError(f"vertex id {v} out of range for n={state.n}")


def select_colored(state: PartitionState, count: int, rng) -> list:
    """Uniform random subset of ``count`` vertices, as a list.

    Rejection on a stamp array; for count > n/2 the complement is drawn.
    """
    n = state.n
    if not 0 <= count <= n:
        raise ValueError(f"count {count} out of range for n={n}")
    state._tick += 1
    tick, stamp = state._tick, state._stamp
    out = []
    if 2 * count <= n:
        while len(out) < count:
            v = _randbelow(rng, n)
            if stamp[v] != tick:
                stamp[v] = tick
                out.append(v)
        return out
    m = n - count
    got = 0
    while got < m:
        v = _randbelow(rng, n)
        if stamp[v] != tick:
            stamp[v] = tick
            got += 1
    return [v for v in range(n) if stamp[v] != tick]


def _touched_roots(state: PartitionState, colored: Sequence[int]):
    roots, mult, index = [], [], {}
    for v in colored:
        r = state.find(v)
        j = index.get(r)
        if j is None:
            index[r] = len(roots)
            roots.append(r)
            mult.append(1)
        else:
            mult[j] += 1
    return roots, mult


def apply_merger(state: PartitionState, colored: Sequence[int], q: float, rng=None) -> MergeReport:
    """Apply a (u,q)-merger to the coloured vertices.

    q = 1 merges every touched block.  For q < 1 block pairs (b, b') are
    linked with probability 1-(1-q)^(k_b k_b'), which is how the random
    graph on coloured vertices connects blocks; in full-graph mode the
    vertex-level edges are drawn instead.
    """
    colored = list(colored)
    _check_ids(state, colored)
    if len(set(colored)) != len(colored):
        raise ValueError("coloured vertices must be distinct")
    if q < 1.0 and state.edges is not None:
        return _apply_merger_full_graph(state, colored, q, rng)
    roots, mult = _touched_roots(state, colored)
    if len(roots) < 2:
        return MergeReport()
    if q >= 1.0:
        lost, gained, _ = state.merge_roots(roots)
        if state.edges is not None:
            for a in range(len(colored)):
                for b in range(a + 1, len(colored)):
                    state.edges.add((min(colored[a], colored[b]), max(colored[a], colored[b])))
        return MergeReport(((lost, gained),))
    nr = len(roots)
    tp = list(range(nr))

    def tfind(a):
        while tp[a] != a:
            tp[a] = tp[tp[a]]
            a = tp[a]
        return a

    comps = nr
    one_minus_q = 1.0 - q
    for a in range(nr):
        if comps == 1:
            break
        for b in range(a + 1, nr):
            if comps == 1:
                break
            link = 1.0 - one_minus_q ** (mult[a] * mult[b])
            if rng.random() < link:
                ra, rb = tfind(a), tfind(b)
                if ra != rb:
                    tp[rb] = ra
                    comps -= 1
    groups = []
    for c in range(nr):
        if tfind(c) != c:
            continue
        members = [roots[a] for a in range(nr) if tfind(a) == c]
        if len(members) >= 2:
            lost, gained, _ = state.merge_roots(members)
            groups.append((lost, gained))
    return MergeReport(tuple(groups))


def _apply_merger_full_graph(state, colored, q, rng) -> MergeReport:
    new_edges = []
    for a in range(len(colored)):
        for b in range(a + 1, len(colored)):
            if rng.random() < q:
                v, w = colored[a], colored[b]
                new_edges.append((min(v, w), max(v, w)))
    state.edges.update(new_edges)
    # connected components of the block graph induced by the new edges
    before = {r: state.size[r] for r in {state.find(v) for v in colored}}
    tp = {r: r for r in before}

    def tfind(a):
        while tp[a] != a:
            a = tp[a]
        return a

    for v, w in new_edges:
        a, b = tfind(state.find(v)), tfind(state.find(w))
        if a != b:
            tp[b] = a
    comps: dict[int, list] = {}
    for r in before:
        comps.setdefault(tfind(r), []).append(r)
    groups = []
    for members in comps.values():
        if len(members) >= 2:
            lost, gained, _ = state.merge_roots(members)
            groups.append((lost, gained))
    return MergeReport(tuple(groups))


def apply_pair_merge(state: PartitionState, v: int, w: int) -> MergeReport:
    _check_ids(state, (v, w))
    rv, rw = state.find(v), state.find(w)
    if state.edges is not None and v != w:
        state.edges.add((min(v, w), max(v, w)))
    if rv == rw:
        return MergeReport()
    lost, gained, _ = state.merge_roots([rv, rw])
    return MergeReport(((lost, gained),))


def spectrum(state: PartitionState, d: int) -> np.ndarray:
    if not 1 <= d <= state.n:
        raise ValueError("need 1 <= d <= n")
    return np.array(state.counts[1 : d + 1], dtype=np.int64)


def dump_partition(state: PartitionState) -> str:
    """One line per block, sorted vertex ids separated by spaces."""
    return "".join(" ".join(map(str, b)) + "\n" for b in state.blocks())


def parse_partition(text: str) -> list:
    """Blocks from a dump; checks that they partition range(n)."""
    blocks = [sorted(int(x) for x in line.split()) for line in text.splitlines() if line.strip()]
    seen = sorted(v for b in blocks for v in b)
    if seen != list(range(len(seen))):
        raise ValueError("blocks must partition 0..n-1")
    return sorted(blocks)


def partition_from_blocks(blocks: Sequence[Sequence[int]]) -> PartitionState:
    n = sum(len(b) for b in blocks)
    state = new_partition(n)
    for b in blocks:
        b = list(b)
        if len(b) >= 2:
            state.merge_roots([state.find(v) for v in b])
    return state


def link_probability(q: float, kb: int, kb2: int) -> float:
    """Probability that two blocks with kb and kb2 coloured vertices get linked."""
    return -math.expm1(kb * kb2 * math.log1p(-q)) if q < 1 else 1.0
