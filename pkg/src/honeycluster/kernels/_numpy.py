"""Pure-numpy kernels. Same signatures and results as ``_numba``.

The DTW fallback sweeps anti-diagonals of the cost table, vectorised over a
batch of series pairs; every cell is still ``cost + min(three neighbours)``,
so values are bit-identical to the row-by-row recurrence.
"""

import numpy as np

_PAIR_BATCH = 128


def _dtw_batch(A, B, band):
    """Banded DTW for P pairs at once. ``A`` is (P, n), ``B`` is (P, m)."""
    P, n = A.shape
    m = B.shape[1]
    # column c of each buffer holds row i = c - 1; column 0 stays +inf
    bufs = [np.full((P, n + 1), np.inf) for _ in range(3)]
    spans = [None, None, None]
    for s in range(n + m - 1):
        lo = max(0, s - (m - 1), -((band - s) // 2))
        hi = min(n - 1, s, (s + band) // 2)
        cur = bufs[s % 3]
        stale = spans[s % 3]
        if stale is not None:
            cur[:, stale[0] + 1 : stale[1] + 2] = np.inf
        if lo > hi:
            spans[s % 3] = None
            continue
        spans[s % 3] = (lo, hi)
        a_seg = A[:, lo : hi + 1]
        b_seg = B[:, s - hi : s - lo + 1][:, ::-1]
        cost = np.abs(a_seg - b_seg)
        if s == 0:
            cur[:, 1] = cost[:, 0]
            continue
        p1 = bufs[(s - 1) % 3]
        p2 = bufs[(s - 2) % 3] if s >= 2 else None
        up = p1[:, lo : hi + 1]  # (i-1, j)
        left = p1[:, lo + 1 : hi + 2]  # (i, j-1)
        best = np.minimum(up, left)
        if p2 is not None:
            best = np.minimum(best, p2[:, lo : hi + 1])  # (i-1, j-1)
        cur[:, lo + 1 : hi + 2] = cost + best
    last = (n + m - 2) % 3
    return bufs[last][:, n].copy()


def dtw_pair(a, b, band):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(_dtw_batch(a[None, :], b[None, :], int(band))[0])


def dtw_pairwise(series, band):
    series = np.asarray(series, dtype=np.float64)
    p = series.shape[0]
    out = np.zeros((p, p))
    ii, jj = np.triu_indices(p, k=1)
    for start in range(0, len(ii), _PAIR_BATCH):
        bi = ii[start : start + _PAIR_BATCH]
        bj = jj[start : start + _PAIR_BATCH]
        vals = _dtw_batch(series[bi], series[bj], int(band))
        out[bi, bj] = vals
        out[bj, bi] = vals
    return out


def optics_graph(d, core):
    n = d.shape[0]
    reach = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    processed = np.zeros(n, dtype=bool)
    ordering = np.empty(n, dtype=np.int64)
    for k in range(n):
        todo = np.flatnonzero(~processed)
        point = todo[np.argmin(reach[todo])]
        processed[point] = True
        ordering[k] = point
        if core[point] == np.inf:
            continue
        todo = np.flatnonzero(~processed)
        if todo.size == 0:
            continue
        r = np.maximum(d[point, todo], core[point])
        better = r < reach[todo]
        reach[todo[better]] = r[better]
        pred[todo[better]] = point
    return ordering, reach, pred


def padded_hamming(codes, lengths, n_bits):
    n = codes.shape[0]
    flat = codes.reshape(n, -1).astype(np.float64)
    overlap = np.rint(flat @ flat.T).astype(np.int64)
    ones = np.rint(flat.sum(axis=1)).astype(np.int64)
    diff = ones[:, None] + ones[None, :] - 2 * overlap
    span = np.maximum(lengths[:, None], lengths[None, :]).astype(np.int64)
    out = np.zeros((n, n))
    nz = span > 0
    out[nz] = diff[nz] / (n_bits * span[nz])
    np.fill_diagonal(out, 0.0)
    return out


def cnm_labels(adj, degree):
    n = adj.shape[0]
    if n == 0:
        return np.arange(0)
    two_m = int(degree.sum())
    e = adj.astype(np.int64).copy()
    a = degree.astype(np.int64).copy()
    label = np.arange(n)
    alive = np.ones(n, dtype=bool)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    floor = np.iinfo(np.int64).min
    while True:
        gain = two_m * e - np.outer(a, a)
        valid = upper & alive[:, None] & alive[None, :]
        gain = np.where(valid, gain, floor)
        flat = int(np.argmax(gain))
        i, j = divmod(flat, n)
        if gain[i, j] <= 0:
            break
        e[i, :] += e[j, :]
        e[:, i] += e[:, j]
        e[j, :] = 0
        e[:, j] = 0
        a[i] += a[j]
        alive[j] = False
        label[label == j] = i
    return label
