"""numba-compiled kernels. Same signatures and results as ``_numpy``."""

import numpy as np

from .._accel import njit


@njit
def dtw_pair(a, b, band):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.empty(m)
    cur = np.empty(m)
    prev_lo = 0
    prev_hi = -1
    for i in range(n):
        lo = max(0, i - band)
        hi = min(m - 1, i + band)
        for j in range(lo, hi + 1):
            c = abs(a[i] - b[j])
            if i == 0 and j == 0:
                cur[j] = c
                continue
            best = np.inf
            if i > 0:
                if prev_lo <= j <= prev_hi and prev[j] < best:
                    best = prev[j]
                if prev_lo <= j - 1 <= prev_hi and prev[j - 1] < best:
                    best = prev[j - 1]
            if j > lo and cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        prev, cur = cur, prev
        prev_lo = lo
        prev_hi = hi
    if prev_lo <= m - 1 <= prev_hi:
        return prev[m - 1]
    return np.inf


@njit
def dtw_pairwise(series, band):
    p = series.shape[0]
    out = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            v = dtw_pair(series[i], series[j], band)
            out[i, j] = v
            out[j, i] = v
    return out


@njit
def optics_graph(d, core):
    n = d.shape[0]
    reach = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    processed = np.zeros(n, dtype=np.bool_)
    ordering = np.empty(n, dtype=np.int64)
    for k in range(n):
        point = -1
        best = np.inf
        for q in range(n):
            if not processed[q] and (point == -1 or reach[q] < best):
                point = q
                best = reach[q]
        processed[point] = True
        ordering[k] = point
        cp = core[point]
        if cp == np.inf:
            continue
        for q in range(n):
            if processed[q]:
                continue
            r = d[point, q]
            if cp > r:
                r = cp
            if r < reach[q]:
                reach[q] = r
                pred[q] = point
    return ordering, reach, pred


@njit
def padded_hamming(codes, lengths, n_bits):
    n = codes.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            span = max(lengths[i], lengths[j])
            if span == 0:
                continue
            diff = 0
            for p in range(span):
                for v in range(codes.shape[2]):
                    if codes[i, p, v] != codes[j, p, v]:
                        diff += 1
            val = diff / (n_bits * span)
            out[i, j] = val
            out[j, i] = val
    return out


@njit
def cnm_labels(adj, degree):
    n = adj.shape[0]
    two_m = degree.sum()
    e = adj.copy()
    a = degree.copy()
    active = np.ones(n, dtype=np.bool_)
    label = np.arange(n)
    while True:
        best = 0
        bi = -1
        bj = -1
        for i in range(n):
            if not active[i]:
                continue
            for j in range(i + 1, n):
                if not active[j]:
                    continue
                gain = two_m * e[i, j] - a[i] * a[j]
                if gain > best:
                    best = gain
                    bi = i
                    bj = j
        if bi < 0:
            break
        for k in range(n):
            e[bi, k] += e[bj, k]
        for k in range(n):
            e[k, bi] += e[k, bj]
        for k in range(n):
            e[bj, k] = 0
            e[k, bj] = 0
        a[bi] += a[bj]
        active[bj] = False
        for k in range(n):
            if label[k] == bj:
                label[k] = bi
    return label
