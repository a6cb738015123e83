"""Compiled inner loops shared by the single-graph API and the ensemble engine.

Edge lists are always canonical: ``u < v`` and lexicographically sorted, so
edge ``k`` of a graph is also the ``k``-th entry of its sorted edge list.
Vertex pairs of K_n are indexed in the same lexicographic order.
"""

import numba as nb
import numpy as np

from .rng import philox4x64, _S11, _TO_UNIT

_Z = np.uint64(0)
_SPLIT = 1 << 62

STATS_EXACT = 1  # all-pairs max co-degree via wedge counting
STATS_APPROX = 2  # max over edges + rows of the top-degree vertices
STATS_EDGES = 0  # max over edges only
TOP_VERTICES = 1024


@nb.njit(nogil=True, cache=True)
def _grow(arr, size):
    out = np.empty(max(2 * arr.shape[0], 16), dtype=arr.dtype)
    out[:size] = arr[:size]
    return out


@nb.njit(nogil=True, cache=True)
def gnp_pair_indices(n_pairs, p, k0, k1, rnd):
    """Pair indices retained by skip-geometric sampling at rate ``p``.

    Draw ``j`` decides the gap before the ``j``-th retained pair:
    ``gap = floor(log(1 - U_j) / log(1 - p))``.
    """
    expect = n_pairs * p
    out = np.empty(int(expect + 6.0 * np.sqrt(expect + 1.0)) + 16, dtype=np.int64)
    size = 0
    if n_pairs == 0 or p <= 0.0:
        return out[:0]
    log_q = np.log1p(-p)
    pos = -1
    j = 0
    block = -1
    w = (_Z, _Z, _Z, _Z)
    limit = float(n_pairs)
    while True:
        b = j >> 2
        if b != block:
            w = philox4x64(np.uint64(b), rnd, _Z, _Z, k0, k1)
            block = b
        u = np.float64(w[j & 3] >> _S11) * _TO_UNIT
        j += 1
        gap = np.floor(np.log1p(-u) / log_q)
        if gap >= limit:
            break
        pos += int(gap) + 1
        if pos >= n_pairs:
            break
        if size == out.shape[0]:
            out = _grow(out, size)
        out[size] = pos
        size += 1
    return out[:size]


@nb.njit(nogil=True, cache=True)
def bernoulli_indices(n_items, q, k0, k1, rnd):
    """Indices ``k < n_items`` whose draw ``U_k`` is below ``q``."""
    expect = n_items * q
    out = np.empty(int(expect + 6.0 * np.sqrt(expect + 1.0)) + 16, dtype=np.int64)
    size = 0
    nblocks = (n_items + 3) >> 2
    for b in range(nblocks):
        w = philox4x64(np.uint64(b), rnd, _Z, _Z, k0, k1)
        for s in range(4):
            k = 4 * b + s
            if k < n_items and np.float64(w[s] >> _S11) * _TO_UNIT < q:
                if size == out.shape[0]:
                    out = _grow(out, size)
                out[size] = k
                size += 1
    return out[:size]


@nb.njit(nogil=True, cache=True)
def bernoulli_mask(n_items, q, k0, k1, rnd):
    mask = np.zeros(n_items, dtype=np.bool_)
    nblocks = (n_items + 3) >> 2
    for b in range(nblocks):
        w = philox4x64(np.uint64(b), rnd, _Z, _Z, k0, k1)
        for s in range(4):
            k = 4 * b + s
            if k < n_items:
                mask[k] = np.float64(w[s] >> _S11) * _TO_UNIT < q
    return mask


@nb.njit(nogil=True, cache=True)
def pairs_to_uv(n, idx):
    """Map sorted lexicographic pair indices of K_n to endpoint arrays."""
    m = idx.shape[0]
    u = np.empty(m, dtype=np.int32)
    v = np.empty(m, dtype=np.int32)
    r = 0
    start = 0
    nxt = n - 1
    for t in range(m):
        k = idx[t]
        while k >= nxt:
            r += 1
            start = nxt
            nxt = start + (n - 1 - r)
        u[t] = r
        v[t] = r + 1 + (k - start)
    return u, v


@nb.njit(nogil=True, cache=True)
def build_csr(n, u, v):
    """Symmetric sorted adjacency from a canonical edge list.

    Returns ``indptr``, ``indices`` and ``eid`` (edge id of each entry).
    """
    m = u.shape[0]
    deg = np.zeros(n + 1, dtype=np.int64)
    for k in range(m):
        deg[u[k] + 1] += 1
        deg[v[k] + 1] += 1
    indptr = np.cumsum(deg)
    pos = indptr[:n].copy()
    indices = np.empty(2 * m, dtype=np.int32)
    eid = np.empty(2 * m, dtype=np.int64)
    # smaller neighbours first: edges arrive sorted by u, so a's for a fixed b ascend
    for k in range(m):
        b = v[k]
        indices[pos[b]] = u[k]
        eid[pos[b]] = k
        pos[b] += 1
    for k in range(m):
        a = u[k]
        indices[pos[a]] = v[k]
        eid[pos[a]] = k
        pos[a] += 1
    return indptr, indices, eid


@nb.njit(nogil=True, cache=True)
def _orient(n, indptr, indices, eid):
    """Keep each edge at its lower endpoint in (degree, id) order."""
    deg = indptr[1:] - indptr[:-1]
    key = deg * n + np.arange(n)
    order = np.argsort(key)
    rank = np.empty(n, dtype=np.int64)
    for r in range(n):
        rank[order[r]] = r
    optr = np.zeros(n + 1, dtype=np.int64)
    for x in range(n):
        c = 0
        for a in range(indptr[x], indptr[x + 1]):
            if rank[indices[a]] > rank[x]:
                c += 1
        optr[x + 1] = optr[x] + c
    oidx = np.empty(optr[n], dtype=np.int32)
    oeid = np.empty(optr[n], dtype=np.int64)
    for x in range(n):
        c = optr[x]
        for a in range(indptr[x], indptr[x + 1]):
            y = indices[a]
            if rank[y] > rank[x]:
                oidx[c] = y
                oeid[c] = eid[a]
                c += 1
    return optr, oidx, oeid


@nb.njit(nogil=True, cache=True)
def count_triangles_csr(n, indptr, indices, eid):
    optr, oidx, _ = _orient(n, indptr, indices, eid)
    mark = np.zeros(n, dtype=np.bool_)
    total = 0
    for x in range(n):
        for a in range(optr[x], optr[x + 1]):
            mark[oidx[a]] = True
        for a in range(optr[x], optr[x + 1]):
            y = oidx[a]
            for b in range(optr[y], optr[y + 1]):
                if mark[oidx[b]]:
                    total += 1
        for a in range(optr[x], optr[x + 1]):
            mark[oidx[a]] = False
    return total


@nb.njit(nogil=True, cache=True)
def edge_codegrees_listing(n, indptr, indices, eid, m):
    """Per-edge co-degree and triangle count by oriented triangle listing."""
    optr, oidx, oeid = _orient(n, indptr, indices, eid)
    slot = np.full(n, -1, dtype=np.int64)
    y = np.zeros(m, dtype=np.int64)
    total = 0
    for x in range(n):
        for a in range(optr[x], optr[x + 1]):
            slot[oidx[a]] = a
        for a in range(optr[x], optr[x + 1]):
            w = oidx[a]
            for b in range(optr[w], optr[w + 1]):
                s = slot[oidx[b]]
                if s >= 0:
                    total += 1
                    y[oeid[a]] += 1
                    y[oeid[b]] += 1
                    y[oeid[s]] += 1
        for a in range(optr[x], optr[x + 1]):
            slot[oidx[a]] = -1
    return y, total


@nb.njit(nogil=True, cache=True)
def sweep_codegrees(n, indptr, indices, eid, m):
    """Per-edge co-degrees and the all-pairs maximum, one row at a time.

    Row ``a`` counts the wedges a - w - b with ``b > a`` into a length-n
    buffer, so the work is one increment per wedge and memory stays O(n).
    """
    cnt = np.zeros(n, dtype=np.int64)
    y = np.zeros(m, dtype=np.int64)
    best = 0
    for a in range(n):
        for i in range(indptr[a], indptr[a + 1]):
            w = indices[i]
            lo = indptr[w]
            hi = indptr[w + 1]
            j = lo + np.searchsorted(indices[lo:hi], a, side="right")
            for k in range(j, hi):
                b = indices[k]
                c = cnt[b] + 1
                cnt[b] = c
                if c > best:
                    best = c
        for i in range(indptr[a], indptr[a + 1]):
            b = indices[i]
            if b > a:
                y[eid[i]] = cnt[b]
        for i in range(indptr[a], indptr[a + 1]):
            w = indices[i]
            lo = indptr[w]
            hi = indptr[w + 1]
            j = lo + np.searchsorted(indices[lo:hi], a, side="right")
            for k in range(j, hi):
                cnt[indices[k]] = 0
    return y, best


@nb.njit(nogil=True, cache=True)
def gather_pairs(mat, u, v):
    out = np.empty(u.shape[0], dtype=np.int64)
    for k in range(u.shape[0]):
        out[k] = mat[u[k], v[k]]
    return out


@nb.njit(nogil=True, cache=True)
def max_rowwise_codegree(n, indptr, indices, rows):
    """Largest co-degree between any vertex in ``rows`` and any other vertex."""
    cnt = np.zeros(n, dtype=np.int64)
    best = 0
    for r in range(rows.shape[0]):
        x = rows[r]
        for a in range(indptr[x], indptr[x + 1]):
            w = indices[a]
            for b in range(indptr[w], indptr[w + 1]):
                cnt[indices[b]] += 1
        cnt[x] = 0
        for a in range(indptr[x], indptr[x + 1]):
            w = indices[a]
            for b in range(indptr[w], indptr[w + 1]):
                z = indices[b]
                if cnt[z] > best:
                    best = cnt[z]
                cnt[z] = 0
    return best


@nb.njit(nogil=True, cache=True)
def sum_squares_split(y):
    """Exact sum of squares as ``(hi, lo)`` with value ``hi * 2**62 + lo``."""
    hi = 0
    lo = 0
    for k in range(y.shape[0]):
        lo += y[k] * y[k]
        if lo >= _SPLIT:
            hi += lo >> 62
            lo &= _SPLIT - 1
    return hi, lo


@nb.njit(nogil=True, cache=True)
def graph_stats(n, u, v, mode):
    """Round statistics of the graph with canonical edges ``(u, v)``.

    Returns ``(edges, X, maxY, sumZ, sumZ2_hi, sumZ2_lo, maxY_exact)``.
    """
    m = u.shape[0]
    indptr, indices, eid = build_csr(n, u, v)
    y, total = edge_codegrees_listing(n, indptr, indices, eid, m)
    sum_z = 0
    max_edge = 0
    for k in range(m):
        sum_z += y[k]
        if y[k] > max_edge:
            max_edge = y[k]
    hi, lo = sum_squares_split(y)
    max_y = max_edge
    exact = 0
    if mode == STATS_EXACT:
        max_y = sweep_codegrees(n, indptr, indices, eid, m)[1]
        exact = 1
    elif mode == STATS_APPROX:
        deg = indptr[1:] - indptr[:-1]
        k_top = min(TOP_VERTICES, n)
        rows = np.argsort(-deg, kind="mergesort")[:k_top]
        max_y = max(max_edge, max_rowwise_codegree(n, indptr, indices, rows))
    return m, total, max_y, sum_z, hi, lo, exact


@nb.njit(nogil=True, cache=True)
def complete_stats(n):
    n_pairs = n * (n - 1) // 2
    x = n * (n - 1) * (n - 2) // 6
    y = max(n - 2, 0)
    # C(n,2) (n-2)^2 split exactly into hi/lo words
    hi = 0
    lo = 0
    sq = y * y
    rem = n_pairs
    chunk = (_SPLIT - 1) // max(sq, 1)
    while rem > 0:
        take = min(rem, chunk)
        lo += take * sq
        rem -= take
        if lo >= _SPLIT:
            hi += lo >> 62
            lo &= _SPLIT - 1
    return n_pairs, x, y, 3 * x, hi, lo, 1


@nb.njit(nogil=True, cache=True)
def iterated_chunk(n, eps, rounds, k0, trial0, count, mode, out):
    """Run ``count`` iterated-percolation traces; ``out`` is (count, rounds+1, 7)."""
    n_pairs = n * (n - 1) // 2
    base = complete_stats(n)
    for t in range(count):
        k1 = np.uint64(trial0 + t)
        for f in range(7):
            out[t, 0, f] = base[f]
        idx = bernoulli_indices(n_pairs, eps, k0, k1, np.uint64(1))
        u, v = pairs_to_uv(n, idx)
        for r in range(1, rounds + 1):
            if r > 1:
                keep = bernoulli_mask(u.shape[0], eps, k0, k1, np.uint64(r))
                u = u[keep]
                v = v[keep]
            s = graph_stats(n, u, v, mode)
            for f in range(7):
                out[t, r, f] = s[f]


@nb.njit(nogil=True, cache=True)
def direct_chunk(n, p, k0, trial0, count, out):
    """Direct G(n,p) trials (round index 0); ``out`` is (count, 2): edges, X."""
    n_pairs = n * (n - 1) // 2
    for t in range(count):
        k1 = np.uint64(trial0 + t)
        idx = gnp_pair_indices(n_pairs, p, k0, k1, _Z)
        u, v = pairs_to_uv(n, idx)
        indptr, indices, eid = build_csr(n, u, v)
        out[t, 0] = u.shape[0]
        out[t, 1] = count_triangles_csr(n, indptr, indices, eid)
