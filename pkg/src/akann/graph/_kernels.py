"""Numba kernels: heaps, distances, HNSW insertion and layer-0 beam searches."""

from __future__ import annotations

import numpy as np
from numba import njit

# test modes for the guarded search
MODE_TEST = 0
MODE_ALWAYS_PASS = 1

# counter slots returned by the searches
C_DIST = 0  # exact distance evaluations
C_TESTS = 1  # routing tests evaluated
C_PASSED = 2  # routing tests passed
C_CLOSE = 3  # instrumented: tested neighbors truly inside the radius (finite radius only)
C_CLOSE_PASSED = 4  # ... of which passed
C_FAR = 5  # instrumented: tested neighbors outside the radius
C_FAR_PASSED = 6
N_COUNTERS = 7


@njit(cache=True, fastmath=True, inline="always")
def sqdist(a, b):
    s = np.float32(0.0)
    for i in range(a.shape[0]):
        t = a[i] - b[i]
        s += t * t
    return s


@njit(cache=True, inline="always")
def _less(ka, ia, kb, ib):
    return ka < kb or (ka == kb and ia < ib)


@njit(cache=True)
def heap_push(keys, ids, size, key, idx):
    """Push onto a min-heap ordered by (key, id); returns the new size."""
    i = size
    keys[i] = key
    ids[i] = idx
    while i > 0:
        p = (i - 1) >> 1
        if not _less(keys[i], ids[i], keys[p], ids[p]):
            break
        keys[i], keys[p] = keys[p], keys[i]
        ids[i], ids[p] = ids[p], ids[i]
        i = p
    return size + 1


@njit(cache=True)
def heap_pop(keys, ids, size):
    """Remove the minimum; returns the new size (the popped pair must be read before)."""
    size -= 1
    keys[0] = keys[size]
    ids[0] = ids[size]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= size:
            break
        c = l
        r = l + 1
        if r < size and _less(keys[r], ids[r], keys[l], ids[l]):
            c = r
        if not _less(keys[c], ids[c], keys[i], ids[i]):
            break
        keys[i], keys[c] = keys[c], keys[i]
        ids[i], ids[c] = ids[c], ids[i]
        i = c
    return size


@njit(cache=True)
def _grow(keys, ids):
    nk = np.empty(keys.shape[0] * 2, keys.dtype)
    ni = np.empty(ids.shape[0] * 2, ids.dtype)
    nk[: keys.shape[0]] = keys
    ni[: ids.shape[0]] = ids
    return nk, ni


@njit(cache=True)
def _drain_sorted(rkeys, rids, rsize):
    """Empty a max-heap stored as negated keys into ascending-distance arrays."""
    out_d = np.empty(rsize, np.float32)
    out_i = np.empty(rsize, np.int32)
    for pos in range(rsize - 1, -1, -1):
        out_d[pos] = -rkeys[0]
        out_i[pos] = rids[0]
        rsize = heap_pop(rkeys, rids, rsize)
    return out_d, out_i


@njit(cache=True)
def neighbor_row(node, layer, adj0, cnt0, adju, cntu, up_start):
    if layer == 0:
        return adj0[node, : cnt0[node]]
    row = up_start[node] + layer - 1
    return adju[row, : cntu[row]]


@njit(cache=True)
def greedy_descent(X, q, ep, epd, top, adj0, cnt0, adju, cntu, up_start, counters):
    """Walk layers top..1 moving to any closer neighbor."""
    cur = ep
    curd = epd
    for layer in range(top, 0, -1):
        changed = True
        while changed:
            changed = False
            nbrs = neighbor_row(cur, layer, adj0, cnt0, adju, cntu, up_start)
            for t in range(nbrs.shape[0]):
                w = nbrs[t]
                dw = sqdist(q, X[w])
                counters[C_DIST] += 1
                if dw < curd or (dw == curd and w < cur):
                    curd = dw
                    cur = w
                    changed = True
    return cur, curd


@njit(cache=True)
def search_layer(X, q, ep, epd, ef, layer, adj0, cnt0, adju, cntu, up_start, visited, epoch):
    """Beam search on one layer with an epoch-stamped visited array (used while building)."""
    cap = 4 * ef + 64
    ckeys = np.empty(cap, np.float32)
    cids = np.empty(cap, np.int32)
    rkeys = np.empty(ef + 1, np.float32)
    rids = np.empty(ef + 1, np.int32)
    csize = heap_push(ckeys, cids, 0, epd, ep)
    rsize = heap_push(rkeys, rids, 0, -epd, ep)
    visited[ep] = epoch
    while csize > 0:
        cd = ckeys[0]
        c = cids[0]
        if cd > -rkeys[0] and rsize >= ef:
            break
        csize = heap_pop(ckeys, cids, csize)
        nbrs = neighbor_row(c, layer, adj0, cnt0, adju, cntu, up_start)
        for t in range(nbrs.shape[0]):
            w = nbrs[t]
            if visited[w] == epoch:
                continue
            visited[w] = epoch
            dw = sqdist(q, X[w])
            if rsize < ef or dw < -rkeys[0]:
                if csize == ckeys.shape[0]:
                    ckeys, cids = _grow(ckeys, cids)
                csize = heap_push(ckeys, cids, csize, dw, w)
                rsize = heap_push(rkeys, rids, rsize, -dw, w)
                if rsize > ef:
                    rsize = heap_pop(rkeys, rids, rsize)
    return _drain_sorted(rkeys, rids, rsize)


@njit(cache=True)
def select_heuristic(X, cand_d, cand_i, count, limit, out):
    """Keep a candidate only if it is closer to the base than to every kept one.

    ``cand_d``/``cand_i`` must be sorted ascending by distance to the base.
    Returns how many ids were written to ``out``.
    """
    kept = 0
    for t in range(count):
        if kept >= limit:
            break
        c = cand_i[t]
        good = True
        for r in range(kept):
            if sqdist(X[c], X[out[r]]) < cand_d[t]:
                good = False
                break
        if good:
            out[kept] = c
            kept += 1
    return kept


@njit(cache=True)
def _link(X, base, new, layer, M, adj0, cnt0, adju, cntu, up_start):
    """Add ``new`` to ``base``'s list at ``layer``, re-pruning when the list is full."""
    if layer == 0:
        row = adj0[base]
        cap = adj0.shape[1]
        cnt = cnt0[base]
    else:
        r = up_start[base] + layer - 1
        row = adju[r]
        cap = adju.shape[1]
        cnt = cntu[r]
    for t in range(cnt):
        if row[t] == new:
            return
    if cnt < cap:
        row[cnt] = new
        cnt += 1
    else:
        cd = np.empty(cnt + 1, np.float32)
        ci = np.empty(cnt + 1, np.int32)
        for t in range(cnt):
            ci[t] = row[t]
            cd[t] = sqdist(X[base], X[row[t]])
        ci[cnt] = new
        cd[cnt] = sqdist(X[base], X[new])
        order = np.argsort(cd, kind="mergesort")
        cd = cd[order]
        ci = ci[order]
        out = np.empty(cap, np.int32)
        cnt = select_heuristic(X, cd, ci, cnt + 1, cap, out)
        row[:cnt] = out[:cnt]
    if layer == 0:
        cnt0[base] = cnt
    else:
        cntu[up_start[base] + layer - 1] = cnt


@njit(cache=True)
def build_graph(X, levels, M, efc, adj0, cnt0, adju, cntu, up_start):
    """Insert nodes in id order; returns (entry point, top layer)."""
    n = X.shape[0]
    visited = np.zeros(n, np.int64)
    epoch = 0
    entry = 0
    top = levels[0]
    dummy = np.zeros(N_COUNTERS, np.int64)
    sel = np.empty(M, np.int32)
    for i in range(1, n):
        q = X[i]
        lvl = levels[i]
        ep = entry
        epd = sqdist(q, X[ep])
        if top > lvl:
            ep, epd = greedy_descent_range(X, q, ep, epd, top, lvl, adj0, cnt0, adju, cntu, up_start, dummy)
        for layer in range(min(lvl, top), -1, -1):
            epoch += 1
            wd, wi = search_layer(X, q, ep, epd, efc, layer, adj0, cnt0, adju, cntu, up_start, visited, epoch)
            kept = select_heuristic(X, wd, wi, wd.shape[0], M, sel)
            for t in range(kept):
                _link(X, i, sel[t], layer, M, adj0, cnt0, adju, cntu, up_start)
                _link(X, sel[t], i, layer, M, adj0, cnt0, adju, cntu, up_start)
            ep = wi[0]
            epd = wd[0]
        if lvl > top:
            top = lvl
            entry = i
    return entry, top


@njit(cache=True)
def greedy_descent_range(X, q, ep, epd, top, stop, adj0, cnt0, adju, cntu, up_start, counters):
    """Greedy walk on layers top..stop+1."""
    cur = ep
    curd = epd
    for layer in range(top, stop, -1):
        changed = True
        while changed:
            changed = False
            nbrs = neighbor_row(cur, layer, adj0, cnt0, adju, cntu, up_start)
            for t in range(nbrs.shape[0]):
                w = nbrs[t]
                dw = sqdist(q, X[w])
                counters[C_DIST] += 1
                if dw < curd or (dw == curd and w < cur):
                    curd = dw
                    cur = w
                    changed = True
    return cur, curd


@njit(cache=True)
def plain_search(X, q, entry, top, ef, adj0, cnt0, adju, cntu, up_start, visited, counters):
    """Standard HNSW query: greedy descent, then an ef-wide beam on layer 0."""
    epd = sqdist(q, X[entry])
    counters[C_DIST] += 1
    ep, epd = greedy_descent(X, q, entry, epd, top, adj0, cnt0, adju, cntu, up_start, counters)
    cap = 4 * ef + 64
    ckeys = np.empty(cap, np.float32)
    cids = np.empty(cap, np.int32)
    rkeys = np.empty(ef + 1, np.float32)
    rids = np.empty(ef + 1, np.int32)
    csize = heap_push(ckeys, cids, 0, epd, ep)
    rsize = heap_push(rkeys, rids, 0, -epd, ep)
    visited[ep] = True
    while csize > 0:
        cd = ckeys[0]
        c = cids[0]
        if cd > -rkeys[0] and rsize >= ef:
            break
        csize = heap_pop(ckeys, cids, csize)
        for t in range(cnt0[c]):
            w = adj0[c, t]
            if visited[w]:
                continue
            visited[w] = True
            dw = sqdist(q, X[w])
            counters[C_DIST] += 1
            if rsize < ef or dw < -rkeys[0]:
                if csize == ckeys.shape[0]:
                    ckeys, cids = _grow(ckeys, cids)
                csize = heap_push(ckeys, cids, csize, dw, w)
                rsize = heap_push(rkeys, rids, rsize, -dw, w)
                if rsize > ef:
                    rsize = heap_pop(rkeys, rids, rsize)
    return _drain_sorted(rkeys, rids, rsize)


@njit(cache=True)
def ks2_search(X, q, entry, top, ef, adj0, cnt0, adju, cntu, up_start, visited, counters,
               lut, codes, c1, c2, norms2, mode, instrument):
    """Layer-0 beam search that computes a neighbor's distance only if its routing test passes.

    A neighbor that fails stays unvisited and may be tested again from
    another node. With ``mode == MODE_ALWAYS_PASS`` every test passes and the
    search reproduces :func:`plain_search` step for step.
    """
    L = lut.shape[0]
    qn2 = np.float64(0.0)
    for i in range(q.shape[0]):
        qn2 += np.float64(q[i]) * np.float64(q[i])
    epd = sqdist(q, X[entry])
    counters[C_DIST] += 1
    ep, epd = greedy_descent(X, q, entry, epd, top, adj0, cnt0, adju, cntu, up_start, counters)
    cap = 4 * ef + 64
    ckeys = np.empty(cap, np.float32)
    cids = np.empty(cap, np.int32)
    rkeys = np.empty(ef + 1, np.float32)
    rids = np.empty(ef + 1, np.int32)
    csize = heap_push(ckeys, cids, 0, epd, ep)
    rsize = heap_push(rkeys, rids, 0, -epd, ep)
    visited[ep] = True
    while csize > 0:
        cd = ckeys[0]
        c = cids[0]
        if cd > -rkeys[0] and rsize >= ef:
            break
        csize = heap_pop(ckeys, cids, csize)
        # <v, q> from the stored norm and the exact distance of the expanded node
        vq = 0.5 * (norms2[c] + qn2 - np.float64(cd))
        for t in range(cnt0[c]):
            w = adj0[c, t]
            if visited[w]:
                continue
            full = rsize >= ef
            passed = True
            if full and mode == MODE_TEST and c2[c, t] > 0.0:
                delta2 = np.float64(-rkeys[0])
                tau = 0.5 * (delta2 - qn2)
                lhs = 0.0
                for i in range(L):
                    lhs += lut[i, codes[c, i, t]]
                passed = lhs >= c1[c, t] - c2[c, t] * (tau + vq)
                counters[C_TESTS] += 1
                if passed:
                    counters[C_PASSED] += 1
                if instrument:
                    inside = sqdist(q, X[w]) < -rkeys[0]
                    if inside:
                        counters[C_CLOSE] += 1
                        if passed:
                            counters[C_CLOSE_PASSED] += 1
                    else:
                        counters[C_FAR] += 1
                        if passed:
                            counters[C_FAR_PASSED] += 1
            elif mode == MODE_ALWAYS_PASS:
                counters[C_TESTS] += 1
                counters[C_PASSED] += 1
            if not passed:
                continue
            visited[w] = True
            dw = sqdist(q, X[w])
            counters[C_DIST] += 1
            if rsize < ef or dw < -rkeys[0]:
                if csize == ckeys.shape[0]:
                    ckeys, cids = _grow(ckeys, cids)
                csize = heap_push(ckeys, cids, csize, dw, w)
                rsize = heap_push(rkeys, rids, rsize, -dw, w)
                if rsize > ef:
                    rsize = heap_pop(rkeys, rids, rsize)
    return _drain_sorted(rkeys, rids, rsize)
