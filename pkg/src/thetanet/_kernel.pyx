# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop; see ``_pykernel.py`` for the readable twin."""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log, pow
from libc.stdint cimport int64_t, uint64_t
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "cython"


class EventCapExceeded(RuntimeError):
    pass


cdef inline double _uniform(bitgen_t* rng) noexcept nogil:
    return <double>(rng.next_uint64(rng.state) >> 11) * (1.0 / 9007199254740992.0)


cdef inline int64_t _below(bitgen_t* rng, int64_t m) noexcept nogil:
    cdef uint64_t mask = <uint64_t>(m - 1)
    cdef uint64_t x
    mask |= mask >> 1
    mask |= mask >> 2
    mask |= mask >> 4
    mask |= mask >> 8
    mask |= mask >> 16
    mask |= mask >> 32
    while True:
        x = rng.next_uint64(rng.state) & mask
        if x < <uint64_t>m:
            return <int64_t>x


cdef inline int64_t _find(int64_t* parent, int64_t v) noexcept nogil:
    cdef int64_t root = v, nxt
    while parent[root] != root:
        root = parent[root]
    while parent[v] != root:
        nxt = parent[v]
        parent[v] = root
        v = nxt
    return root


cdef inline int64_t _tfind(int64_t* tp, int64_t a) noexcept nogil:
    while tp[a] != a:
        tp[a] = tp[tp[a]]
        a = tp[a]
    return a


cdef struct State:
    int64_t n
    int64_t* parent
    int64_t* size
    int64_t* counts
    int64_t* vmark
    int64_t* rmark
    int64_t tick
    int64_t rtick
    int64_t* colored
    int64_t* roots
    int64_t* mult
    int64_t* tp
    int64_t* group
    char* inb
    int64_t* lam
    int64_t mass
    int bubble


cdef void _merge_roots(State* st, int64_t* roots, int64_t nr) noexcept nogil:
    cdef int64_t target = roots[0], total = 0, r, s, i
    cdef int any_b = 0
    for i in range(nr):
        r = roots[i]
        total += st.size[r]
        if st.size[r] > st.size[target]:
            target = r
        if st.bubble and st.inb[r]:
            any_b = 1
    for i in range(nr):
        r = roots[i]
        s = st.size[r]
        st.counts[s] -= 1
        if any_b:
            if st.inb[r]:
                st.lam[s] -= 1
            else:
                st.mass += s
        if r != target:
            st.parent[r] = target
    st.size[target] = total
    st.counts[total] += 1
    if any_b:
        st.lam[total] += 1
        st.inb[target] = 1


cdef int64_t _select(State* st, bitgen_t* rng, int64_t k) noexcept nogil:
    """Uniform k-subset into st.colored; returns k."""
    cdef int64_t n = st.n, cnt = 0, v, m
    st.tick += 1
    if 2 * k <= n:
        while cnt < k:
            v = _below(rng, n)
            if st.vmark[v] != st.tick:
                st.vmark[v] = st.tick
                st.colored[cnt] = v
                cnt += 1
        return k
    m = n - k
    while cnt < m:
        v = _below(rng, n)
        if st.vmark[v] != st.tick:
            st.vmark[v] = st.tick
            cnt += 1
    cnt = 0
    for v in range(n):
        if st.vmark[v] != st.tick:
            st.colored[cnt] = v
            cnt += 1
    return k


cdef int _merge_colored(State* st, bitgen_t* rng, int64_t k, double q) noexcept nogil:
    cdef int64_t j, r, nr = 0, a, b, ra, rb, c, comps, ng
    cdef int merged = 0
    cdef double one_minus_q
    st.rtick += 1
    for j in range(k):
        r = _find(st.parent, st.colored[j])
        if st.rmark[r] != st.rtick:
            st.rmark[r] = st.rtick
            st.tp[r] = nr          # slot index of this root, reused below
            st.roots[nr] = r
            st.mult[nr] = 1
            nr += 1
        else:
            st.mult[st.tp[r]] += 1
    if nr < 2:
        return 0
    if q >= 1.0:
        _merge_roots(st, st.roots, nr)
        return 1
    # block-level linking on slots 0..nr-1 (tp reused as slot parents)
    for a in range(nr):
        st.tp[a] = a
    comps = nr
    one_minus_q = 1.0 - q
    for a in range(nr):
        if comps == 1:
            break
        for b in range(a + 1, nr):
            if comps == 1:
                break
            if _uniform(rng) < 1.0 - pow(one_minus_q, <double>(st.mult[a] * st.mult[b])):
                ra = _tfind(st.tp, a)
                rb = _tfind(st.tp, b)
                if ra != rb:
                    st.tp[rb] = ra
                    comps -= 1
    for c in range(nr):
        if _tfind(st.tp, c) != c:
            continue
        ng = 0
        for a in range(nr):
            if _tfind(st.tp, a) == c:
                st.group[ng] = st.roots[a]
                ng += 1
        if ng >= 2:
            _merge_roots(st, st.group, ng)
            merged = 1
    return merged


def run_events(int64_t n, class_cum, class_kind, class_q, k_offsets, k_cum, sample_times,
               int64_t d, bit_generator, int64_t m0=0, int64_t max_events=1000000000, trace=None):
    """Simulate one replica; same contract as the pure-Python ``run_events``."""
    cdef double[::1] ccum = np.ascontiguousarray(class_cum, dtype=np.float64)
    cdef int64_t[::1] kinds = np.ascontiguousarray(class_kind, dtype=np.int64)
    cdef double[::1] qs = np.ascontiguousarray(class_q, dtype=np.float64)
    cdef int64_t[::1] koff = np.ascontiguousarray(k_offsets, dtype=np.int64)
    cdef double[::1] kcum = np.ascontiguousarray(k_cum, dtype=np.float64)
    cdef double[::1] times = np.ascontiguousarray(sample_times, dtype=np.float64)
    cdef int64_t S = times.shape[0]
    spec_a = np.zeros((S, d), dtype=np.int64)
    lam_a = np.zeros((S, d), dtype=np.int64)
    mass_a = np.zeros(S, dtype=np.int64)
    cdef int64_t[:, ::1] spec = spec_a
    cdef int64_t[:, ::1] lamr = lam_a
    cdef int64_t[::1] massr = mass_a

    parent_a = np.arange(n, dtype=np.int64)
    size_a = np.ones(n, dtype=np.int64)
    counts_a = np.zeros(n + 1, dtype=np.int64)
    vmark_a = np.full(n, -1, dtype=np.int64)
    rmark_a = np.full(n, -1, dtype=np.int64)
    work_a = np.zeros((5, n), dtype=np.int64)
    inb_a = np.zeros(n, dtype=np.int8)
    lam_full_a = np.zeros(n + 1, dtype=np.int64)
    cdef int64_t[::1] parent = parent_a
    cdef int64_t[::1] size = size_a
    cdef int64_t[::1] counts = counts_a
    cdef int64_t[::1] vmark = vmark_a
    cdef int64_t[::1] rmark = rmark_a
    cdef int64_t[:, ::1] work = work_a
    cdef cnp.int8_t[::1] inb = inb_a
    cdef int64_t[::1] lam_full = lam_full_a

    cdef int64_t[:, ::1] tr
    cdef int64_t trace_rows = 0
    if trace is not None:
        tr = trace
        trace_rows = tr.shape[0]

    capsule = bit_generator.capsule
    cdef bitgen_t* rng = <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef State st
    st.n = n
    st.parent = &parent[0]
    st.size = &size[0]
    st.counts = &counts[0]
    st.vmark = &vmark[0]
    st.rmark = &rmark[0]
    st.tick = 0
    st.rtick = 0
    st.colored = &work[0, 0]
    st.roots = &work[1, 0]
    st.mult = &work[2, 0]
    st.tp = &work[3, 0]
    st.group = &work[4, 0]
    st.inb = <char*>&inb[0]
    st.lam = &lam_full[0]
    st.mass = 0
    st.bubble = 1 if m0 > 0 else 0
    counts[1] = n

    cdef int64_t ncls = ccum.shape[0]
    cdef double total = ccum[ncls - 1] if ncls > 0 else 0.0
    cdef double t = 0.0, target
    cdef int64_t si = 0, i, j, c, k, lo, hi, mid, v, w, rv, rw
    cdef int64_t nonsilent = 0, silent = 0, n_traced = 0
    cdef int capped = 0

    with bit_generator.lock:
        if m0 > 0:
            _select(&st, rng, m0)
            for j in range(m0):
                st.inb[st.colored[j]] = 1
            st.lam[1] = m0
            st.mass = m0
        with nogil:
            if not total > 0.0:
                while si < S:
                    for j in range(d):
                        spec[si, j] = counts[j + 1]
                        lamr[si, j] = st.lam[j + 1]
                    massr[si] = st.mass
                    si += 1
            while si < S:
                t += -log(1.0 - _uniform(rng)) / total
                while si < S and times[si] < t:
                    for j in range(d):
                        spec[si, j] = counts[j + 1]
                        lamr[si, j] = st.lam[j + 1]
                    massr[si] = st.mass
                    si += 1
                if si == S:
                    break
                if nonsilent + silent >= max_events:
                    capped = 1
                    break
                target = _uniform(rng) * total
                c = 0
                while c < ncls - 1 and ccum[c] <= target:
                    c += 1
                if kinds[c] == 1:
                    v = _below(rng, n)
                    w = _below(rng, n - 1)
                    if w >= v:
                        w += 1
                    rv = _find(st.parent, v)
                    rw = _find(st.parent, w)
                    if rv == rw:
                        silent += 1
                    else:
                        st.roots[0] = rv
                        st.roots[1] = rw
                        _merge_roots(&st, st.roots, 2)
                        nonsilent += 1
                else:
                    lo = koff[c]
                    hi = koff[c + 1]
                    target = _uniform(rng) * kcum[hi - 1]
                    # first index in [lo, hi) with kcum > target
                    i = lo
                    j = hi
                    while i < j:
                        mid = (i + j) // 2
                        if kcum[mid] > target:
                            j = mid
                        else:
                            i = mid + 1
                    k = i - lo
                    if k > hi - lo - 1:
                        k = hi - lo - 1
                    k += 2
                    _select(&st, rng, k)
                    if _merge_colored(&st, rng, k, qs[c]):
                        nonsilent += 1
                    else:
                        silent += 1
                if n_traced < trace_rows:
                    for j in range(d):
                        tr[n_traced, j] = counts[j + 1]
                    n_traced += 1
    if capped:
        raise EventCapExceeded(f"more than {max_events} events")
    if m0 == 0:
        lam_full_a[:] = 0
    return spec_a, lam_a, mass_a, nonsilent, silent, counts_a, lam_full_a, n_traced
