"""Adjusted mutual information with the hypergeometric (permutation) null.

AMI = (MI - E[MI]) / (mean(H1, H2) - E[MI]), natural logs, arithmetic-mean
normalisation. NOISE members count as singleton clusters.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.special import gammaln

from .partition import NOISE, Partition


def noise_as_singletons(labels: Sequence[int]) -> np.ndarray:
    """Give every NOISE entry its own label above the existing ones."""
    labels = np.asarray(labels, dtype=np.int64).copy()
    noise = labels == NOISE
    top = labels.max() + 1 if labels.size and labels.max() >= 0 else 0
    labels[noise] = top + np.arange(int(noise.sum()))
    return labels


def cluster_sizes(labels: np.ndarray) -> np.ndarray:
    return np.unique(labels, return_counts=True)[1]


def entropy(sizes: np.ndarray, n: int) -> float:
    p = np.asarray(sizes, dtype=np.float64) / n
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def mutual_info(l1: np.ndarray, l2: np.ndarray) -> float:
    n = len(l1)
    _, a_idx, a_cnt = np.unique(l1, return_inverse=True, return_counts=True)
    _, b_idx, b_cnt = np.unique(l2, return_inverse=True, return_counts=True)
    cells, nij = np.unique(a_idx * len(b_cnt) + b_idx, return_counts=True)
    ai = a_cnt[cells // len(b_cnt)].astype(np.float64)
    bj = b_cnt[cells % len(b_cnt)].astype(np.float64)
    nij = nij.astype(np.float64)
    return float((nij / n * (np.log(nij) + np.log(n) - np.log(ai) - np.log(bj))).sum())


def emi_row_table(col_sizes: np.ndarray, n: int, row_sizes: Sequence[int]) -> dict[int, float]:
    """E[MI] contribution of one row of size ``a`` against fixed column sizes.

    Returns {a: sum_j sum_t (t/n) log(n t / (a b_j)) P(t | a, b_j, n)} for each
    requested ``a``. Summing the table over a labelling's cluster sizes gives
    E[MI] against the columns.
    """
    b_vals, b_mult = np.unique(np.asarray(col_sizes, dtype=np.int64), return_counts=True)
    b = b_vals.astype(np.float64)
    lg_b = gammaln(b + 1) + gammaln(n - b + 1)
    lg_n = gammaln(n + 1)
    out: dict[int, float] = {}
    for a in sorted({int(x) for x in row_sizes}):
        if a <= 0 or a > n:
            out[a] = 0.0
            continue
        t_max = min(a, int(b_vals.max()))
        t = np.arange(1, t_max + 1, dtype=np.float64)[:, None]  # (T, 1)
        lo = np.maximum(1, a + b_vals - n)[None, :]
        hi = np.minimum(a, b_vals)[None, :]
        valid = (t >= lo) & (t <= hi)
        tt = np.where(valid, t, 1.0)
        log_p = (
            gammaln(a + 1)
            + gammaln(n - a + 1)
            + lg_b[None, :]
            - lg_n
            - gammaln(tt + 1)
            - gammaln(a - tt + 1)
            - gammaln(b[None, :] - tt + 1)
            - gammaln(n - a - b[None, :] + tt + 1)
        )
        term = tt / n * (np.log(n) + np.log(tt) - np.log(a) - np.log(b[None, :])) * np.exp(log_p)
        term = np.where(valid, term, 0.0)
        out[a] = float((term.sum(axis=0) * b_mult).sum())
    return out


def expected_mutual_info(row_sizes: np.ndarray, col_sizes: np.ndarray, n: int) -> float:
    table = emi_row_table(col_sizes, n, row_sizes)
    return float(sum(table[int(a)] for a in row_sizes))


def same_grouping(l1: np.ndarray, l2: np.ndarray) -> bool:
    pairs = np.unique(np.stack([l1, l2]), axis=1)
    return pairs.shape[1] == len(np.unique(l1)) == len(np.unique(l2))


def ami_from_labels(l1: Sequence[int], l2: Sequence[int]) -> float:
    """AMI of two labellings of the same items (NOISE -> singletons)."""
    l1 = noise_as_singletons(l1)
    l2 = noise_as_singletons(l2)
    n = len(l1)
    if n != len(l2):
        raise ValueError("labellings differ in length")
    if n < 2:
        raise ValueError("AMI needs at least two items")
    if same_grouping(l1, l2):
        return 1.0
    a, b = cluster_sizes(l1), cluster_sizes(l2)
    mi = mutual_info(l1, l2)
    emi = expected_mutual_info(a, b, n)
    denom = 0.5 * (entropy(a, n) + entropy(b, n)) - emi
    if abs(denom) < np.finfo(np.float64).eps:
        denom = np.copysign(np.finfo(np.float64).eps, denom)
    return float((mi - emi) / denom)


def ami(p1: Partition, p2: Partition) -> float | None:
    """AMI over the shared part of two universes; None when fewer than 2 shared."""
    in2 = set(p2.universe)
    shared = [ip for ip in p1.universe if ip in in2]
    if len(shared) < 2:
        return None
    return ami_from_labels([p1.labels[ip] for ip in shared], [p2.labels[ip] for ip in shared])
