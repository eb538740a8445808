from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .. import kernels
from .partition import Partition


def _index_edges(nodes: Sequence[str], edges: Iterable[tuple[str, str]]) -> tuple[dict, set]:
    pos = {n: i for i, n in enumerate(nodes)}
    if len(pos) != len(nodes):
        raise ValueError("duplicate nodes")
    pairs = set()
    for u, v in edges:
        if u not in pos or v not in pos:
            raise ValueError(f"edge ({u}, {v}) references an unknown node")
        if u == v:
            continue
        i, j = pos[u], pos[v]
        pairs.add((min(i, j), max(i, j)))
    return pos, pairs


def connected_components(
    nodes: Sequence[str], edges: Iterable[tuple[str, str]], method_tag: str = "components"
) -> Partition:
    """Label each node by its connected component; isolated nodes are singletons."""
    nodes = list(nodes)
    _, pairs = _index_edges(nodes, edges)
    parent = list(range(len(nodes)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return Partition.from_labels(nodes, [find(i) for i in range(len(nodes))], method_tag)


def adjacency(nodes: Sequence[str], edges: Iterable[tuple[str, str]]) -> np.ndarray:
    """Dense 0/1 adjacency; parallel edges and self-loops collapse away."""
    _, pairs = _index_edges(list(nodes), edges)
    adj = np.zeros((len(nodes), len(nodes)), dtype=np.int64)
    for i, j in pairs:
        adj[i, j] = adj[j, i] = 1
    return adj


def modularity(adj: np.ndarray, labels: Sequence[int]) -> float:
    """Newman modularity of a labelling; 0.0 for an edgeless graph."""
    adj = np.asarray(adj, dtype=np.float64)
    labels = np.asarray(labels)
    two_m = adj.sum()
    if two_m == 0:
        return 0.0
    deg = adj.sum(axis=1)
    q = 0.0
    for lab in np.unique(labels):
        members = labels == lab
        inside = adj[np.ix_(members, members)].sum()
        q += inside / two_m - (deg[members].sum() / two_m) ** 2
    return float(q)


@dataclass(frozen=True)
class CommunityResult:
    labels: Partition
    modularity_Q: float


def greedy_modularity(
    nodes: Sequence[str], edges: Iterable[tuple[str, str]], method_tag: str = "greedy_modularity"
) -> CommunityResult:
    """Clauset-Newman-Moore agglomeration.

    Starts from singletons and repeatedly merges the pair of communities with
    the largest modularity gain, stopping once no merge has a positive gain.
    Gains are compared as exact integers (``2m * e_ij - d_i * d_j``), and ties
    go to the lowest (i, j) label pair.
    """
    nodes = list(nodes)
    if not nodes:
        return CommunityResult(Partition.empty(method_tag), 0.0)
    adj = adjacency(nodes, edges)
    raw = kernels.cnm_labels(adj, adj.sum(axis=1))
    part = Partition.from_labels(nodes, raw, method_tag)
    return CommunityResult(part, modularity(adj, part.label_array))
