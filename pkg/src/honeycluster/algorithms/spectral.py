from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .partition import Partition

ZERO_EIG_TOL = 1e-9


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray  # ascending, smallest k_max + 1 (or fewer on tiny graphs)
    chosen_k: int
    labels: Partition
    single_cluster: bool = False  # the k=1 gap beat every gap in [k_min, k_max]


def normalized_laplacian(adj: np.ndarray) -> np.ndarray:
    """L = I - D^-1/2 A D^-1/2 for a graph without isolated nodes."""
    adj = np.asarray(adj, dtype=np.float64)
    deg = adj.sum(axis=1)
    if np.any(deg == 0):
        raise ValueError("normalized Laplacian needs every node to have an edge")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(adj.shape[0]) - inv_sqrt[:, None] * adj * inv_sqrt[None, :]
    return (lap + lap.T) / 2.0


def kmeans(
    points: np.ndarray, k: int, seed: int, n_init: int = 10, max_iter: int = 300
) -> tuple[np.ndarray, float]:
    """Lloyd's k-means with k-means++ seeding; best inertia over restarts."""
    n_init = max(1, min(int(n_init), 50))
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = np.empty((k, points.shape[1]))
        centers[0] = points[rng.integers(n)]
        closest = ((points - centers[0]) ** 2).sum(axis=1)
        for c in range(1, k):
            total = closest.sum()
            if total <= 0:
                pick = rng.integers(n)
            else:
                pick = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
                pick = min(pick, n - 1)
            centers[c] = points[pick]
            closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(axis=1))
        labels = np.zeros(n, dtype=np.int64)
        for it in range(max_iter):
            dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new = np.argmin(dist, axis=1)
            if it > 0 and np.array_equal(new, labels):
                break
            labels = new
            for c in range(k):
                members = points[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
        inertia = float(((points - centers[labels]) ** 2).sum())
        if inertia < best_inertia:
            best_labels, best_inertia = labels.copy(), inertia
    return best_labels, best_inertia


def choose_k(eigenvalues: np.ndarray, k_min: int, k_max: int) -> tuple[int, bool]:
    """Largest eigengap lambda_{k+1} - lambda_k over k in [k_min, k_max].

    Returns (k, single) where ``single`` says the k=1 gap is at least as large
    as the best candidate, i.e. the graph does not split.
    """
    gaps = np.diff(eigenvalues)  # gaps[k-1] = lambda_{k+1} - lambda_k
    ks = np.arange(k_min, k_max + 1)
    cand = gaps[ks - 1]
    best = int(ks[int(np.argmax(cand))])
    single = bool(gaps[0] >= cand.max())
    return best, single


def spectral_cluster(
    adjacency: np.ndarray,
    nodes: Sequence[str] | None = None,
    k_min: int = 2,
    k_max: int = 10,
    seed: int = 0,
    method_tag: str = "spectral",
    n_init: int = 10,
) -> SpectralResult:
    """Spectral clustering of a 0/1 graph with the eigengap choice of k.

    Isolated nodes are taken out first and come back as singleton clusters.
    """
    adj = np.asarray(adjacency)
    n = adj.shape[0]
    if adj.shape != (n, n) or not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be square and symmetric")
    if np.any(np.diag(adj) != 0):
        raise ValueError("adjacency must have a zero diagonal")
    if k_min < 2:
        raise ValueError("k_min must be >= 2")
    nodes = list(nodes) if nodes is not None else [str(i) for i in range(n)]
    raw = np.zeros(n, dtype=np.int64)
    connected = np.flatnonzero(adj.sum(axis=1) > 0)
    isolated = np.flatnonzero(adj.sum(axis=1) == 0)
    m = len(connected)

    if m < k_min + 1:
        # too small to split: one cluster for the connected part
        eig = np.linalg.eigvalsh(normalized_laplacian(adj[np.ix_(connected, connected)])) if m else np.array([])
        raw[connected] = 0
        raw[isolated] = np.arange(len(isolated)) + 1
        part = Partition.from_labels(nodes, raw, method_tag)
        return SpectralResult(np.sort(eig), k_min, part, single_cluster=True)

    sub = adj[np.ix_(connected, connected)].astype(np.float64)
    lap = normalized_laplacian(sub)
    vals, vecs = np.linalg.eigh(lap)
    k_top = min(k_max, m - 1)
    eig = vals[: k_top + 1]
    k, single = choose_k(eig, k_min, k_top)
    if single:
        sub_labels = np.zeros(m, dtype=np.int64)
    else:
        emb = vecs[:, :k]
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        sub_labels, _ = kmeans(emb / norms, k, seed, n_init=n_init)
    raw[connected] = sub_labels
    raw[isolated] = sub_labels.max() + 1 + np.arange(len(isolated))
    return SpectralResult(eig, k, Partition.from_labels(nodes, raw, method_tag), single)
