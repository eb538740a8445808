from __future__ import annotations

from collections.abc import Hashable, Sequence

import numpy as np

from .. import kernels


def dtw(a: Sequence[float], b: Sequence[float], band: int | None = None) -> float:
    """DTW with |x - y| local cost and a Sakoe-Chiba band of half-width ``band``.

    ``band=None`` means no band. The band must cover the length difference,
    otherwise the end cell is unreachable.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ValueError("dtw needs two non-empty 1-D sequences")
    if band is None:
        band = max(a.size, b.size)
    if band < abs(a.size - b.size):
        raise ValueError(f"band {band} is narrower than the length difference {abs(a.size - b.size)}")
    return float(kernels.dtw_pair(a, b, int(band)))


def dtw_matrix(series: np.ndarray, band: int) -> np.ndarray:
    """Pairwise banded DTW between the rows of an equal-length series matrix."""
    series = np.ascontiguousarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise ValueError("series must be 2-D (n_series, length)")
    if band < 0:
        raise ValueError("band must be >= 0")
    return kernels.dtw_pairwise(series, int(band))


def jaccard_distance(s1: set, s2: set) -> float:
    """1 - |s1 & s2| / |s1 | s2|; two empty sets are at distance 0."""
    union = len(s1 | s2)
    if union == 0:
        return 0.0
    return 1.0 - len(s1 & s2) / union


def jaccard_matrix(sets: Sequence[set[Hashable]]) -> np.ndarray:
    """All-pairs Jaccard distance via a sparse incidence product."""
    from scipy import sparse

    vocab: dict[Hashable, int] = {}
    rows, cols = [], []
    for i, s in enumerate(sets):
        for item in s:
            rows.append(i)
            cols.append(vocab.setdefault(item, len(vocab)))
    n = len(sets)
    inc = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, max(len(vocab), 1))
    )
    inter = np.rint((inc @ inc.T).toarray()).astype(np.int64)
    sizes = np.array([len(s) for s in sets], dtype=np.int64)
    union = sizes[:, None] + sizes[None, :] - inter
    out = np.zeros((n, n))
    nz = union > 0
    out[nz] = 1.0 - inter[nz] / union[nz]
    np.fill_diagonal(out, 0.0)
    return out
