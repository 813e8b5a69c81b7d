"""Pure-Python event loop, a statement-for-statement twin of ``_kernel.pyx``."""
from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np

from .partition import RawStream, new_partition, seed_bubble, select_colored

BACKEND = "python"


class EventCapExceeded(RuntimeError):
    pass


def run_events(n, class_cum, class_kind, class_q, k_offsets, k_cum, sample_times, d,
               bit_generator, m0=0, max_events=10**9, trace=None):
    """Simulate one replica and record the spectrum at ``sample_times``.

    Returns (spec, lam, mass, nonsilent, silent, final_counts, final_lam, n_traced).
    ``trace``, if given, is an int64 array (rows, d) that receives
    counts[1..d] after each event until it is full.
    """
    S = len(sample_times)
    spec = np.zeros((S, d), dtype=np.int64)
    lam_rec = np.zeros((S, d), dtype=np.int64)
    mass_rec = np.zeros(S, dtype=np.int64)
    rng = RawStream(bit_generator)
    state = new_partition(n)
    if m0 > 0:
        seed_bubble(state, m0, rng)
    counts = state.counts
    times = [float(t) for t in sample_times]
    ccum = [float(x) for x in class_cum]
    kinds = [int(x) for x in class_kind]
    qs = [float(x) for x in class_q]
    koff = [int(x) for x in k_offsets]
    kcum = [float(x) for x in k_cum]
    ncls = len(ccum)
    total = ccum[-1] if ncls else 0.0
    trace_rows = 0 if trace is None else trace.shape[0]
    n_traced = 0
    nonsilent = silent = 0
    t = 0.0
    si = 0

    def record(i):
        for j in range(d):
            spec[i, j] = counts[j + 1]
        if m0 > 0:
            for j in range(d):
                lam_rec[i, j] = state.lam[j + 1]
            mass_rec[i] = state.bubble_mass

    if not total > 0.0:
        for i in range(S):
            record(i)
        si = S
    while si < S:
        t += -math.log(1.0 - rng.random()) / total
        while si < S and times[si] < t:
            record(si)
            si += 1
        if si == S:
            break
        if nonsilent + silent >= max_events:
            raise EventCapExceeded(f"more than {max_events} events")
        target = rng.random() * total
        c = 0
        while c < ncls - 1 and ccum[c] <= target:
            c += 1
        if kinds[c] == 1:
            v = rng.below(n)
            w = rng.below(n - 1)
            if w >= v:
                w += 1
            rv, rw = state.find(v), state.find(w)
            if rv == rw:
                silent += 1
            else:
                state.merge_roots([rv, rw])
                nonsilent += 1
        else:
            lo, hi = koff[c], koff[c + 1]
            target = rng.random() * kcum[hi - 1]
            j = bisect_right(kcum, target, lo, hi) - lo
            k = 2 + min(j, hi - lo - 1)
            colored = select_colored(state, k, rng)
            if _merge_colored(state, colored, qs[c], rng):
                nonsilent += 1
            else:
                silent += 1
        if n_traced < trace_rows:
            for j in range(d):
                trace[n_traced, j] = counts[j + 1]
            n_traced += 1
    final_counts = np.array(counts, dtype=np.int64)
    final_lam = np.array(state.lam if m0 > 0 else [0] * (n + 1), dtype=np.int64)
    return spec, lam_rec, mass_rec, nonsilent, silent, final_counts, final_lam, n_traced


def _merge_colored(state, colored, q, rng) -> bool:
    find = state.find
    roots, mult, index = [], [], {}
    for v in colored:
        r = find(v)
        j = index.get(r)
        if j is None:
            index[r] = len(roots)
            roots.append(r)
            mult.append(1)
        else:
            mult[j] += 1
    nr = len(roots)
    if nr < 2:
        return False
    if q >= 1.0:
        state.merge_roots(roots)
        return True
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
            if rng.random() < 1.0 - one_minus_q ** (mult[a] * mult[b]):
                ra, rb = tfind(a), tfind(b)
                if ra != rb:
                    tp[rb] = ra
                    comps -= 1
    merged = False
    for c in range(nr):
        if tfind(c) != c:
            continue
        members = [roots[a] for a in range(nr) if tfind(a) == c]
        if len(members) >= 2:
            state.merge_roots(members)
            merged = True
    return merged
