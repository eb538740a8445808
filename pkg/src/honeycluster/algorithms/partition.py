from __future__ import annotations

import ipaddress
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

NOISE = -1


def ip_sort_key(item: str) -> tuple:
    """Numeric order for IP strings; anything else sorts after, by text."""
    try:
        addr = ipaddress.ip_address(item)
    except ValueError:
        return (2, 0, item)
    return (0 if addr.version == 4 else 1, int(addr), item)


def sort_items(items: Iterable[str]) -> list[str]:
    return sorted(set(items), key=ip_sort_key)


def compact_labels(raw: Sequence[int]) -> np.ndarray:
    """Renumber cluster labels 0..k-1 by first appearance; NOISE stays NOISE."""
    out = np.full(len(raw), NOISE, dtype=np.int64)
    seen: dict[int, int] = {}
    for i, lab in enumerate(raw):
        lab = int(lab)
        if lab == NOISE:
            continue
        if lab not in seen:
            seen[lab] = len(seen)
        out[i] = seen[lab]
    return out


@dataclass(frozen=True)
class Partition:
    """Cluster labels over an ordered universe of items (usually IPs).

    Labels are contiguous ``0..k-1``; ``NOISE`` marks unclustered members.
    A partition may cover only part of the known IPs.
    """

    universe: tuple[str, ...]
    labels: Mapping[str, int]
    method_tag: str = ""
    _array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.universe)) != len(self.universe):
            raise ValueError("duplicate items in partition universe")
        missing = [ip for ip in self.universe if ip not in self.labels]
        if missing:
            raise ValueError(f"unlabelled items: {missing[:5]}")
        extra = set(self.labels) - set(self.universe)
        if extra:
            raise ValueError(f"labels outside universe: {sorted(extra)[:5]}")
        arr = np.array([int(self.labels[ip]) for ip in self.universe], dtype=np.int64)
        if np.any(arr < NOISE):
            raise ValueError("labels must be >= -1")
        used = np.unique(arr[arr >= 0])
        if used.size and (used[0] != 0 or used[-1] != used.size - 1):
            raise ValueError("cluster labels must be contiguous from 0")
        object.__setattr__(self, "labels", dict(self.labels))
        object.__setattr__(self, "_array", arr)

    @classmethod
    def from_labels(
        cls, universe: Sequence[str], raw_labels: Sequence[int], method_tag: str = ""
    ) -> Partition:
        """Build from arbitrary integer labels (compacted by first appearance)."""
        universe = tuple(universe)
        if len(universe) != len(raw_labels):
            raise ValueError("universe and labels differ in length")
        compact = compact_labels(raw_labels)
        return cls(universe, dict(zip(universe, compact.tolist())), method_tag)

    @classmethod
    def from_clusters(
        cls, clusters: Iterable[Iterable[str]], method_tag: str = "", noise: Iterable[str] = ()
    ) -> Partition:
        raw: dict[str, int] = {}
        for k, members in enumerate(clusters):
            for ip in members:
                if ip in raw:
                    raise ValueError(f"{ip} appears in two clusters")
                raw[ip] = k
        for ip in noise:
            if ip in raw:
                raise ValueError(f"{ip} is both clustered and noise")
            raw[ip] = NOISE
        universe = sort_items(raw)
        return cls.from_labels(universe, [raw[ip] for ip in universe], method_tag)

    @classmethod
    def empty(cls, method_tag: str = "") -> Partition:
        return cls((), {}, method_tag)

    def __len__(self) -> int:
        return len(self.universe)

    def __contains__(self, item: str) -> bool:
        return item in self.labels

    @property
    def label_array(self) -> np.ndarray:
        return self._array.copy()

    @property
    def n_clusters(self) -> int:
        return int(self._array.max()) + 1 if self._array.size and self._array.max() >= 0 else 0

    @property
    def noise(self) -> list[str]:
        return [ip for ip in self.universe if self.labels[ip] == NOISE]

    def clusters(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for ip in self.universe:
            lab = self.labels[ip]
            if lab != NOISE:
                out.setdefault(lab, []).append(ip)
        return dict(sorted(out.items()))

    def restricted(self, items: Iterable[str]) -> Partition:
        keep = set(items)
        universe = [ip for ip in self.universe if ip in keep]
        return Partition.from_labels(universe, [self.labels[ip] for ip in universe], self.method_tag)

    def canonical(self) -> Partition:
        """Same clustering, universe in IP order, labels renumbered in that order."""
        universe = sort_items(self.universe)
        return Partition.from_labels(universe, [self.labels[ip] for ip in universe], self.method_tag)

    def same_clustering(self, other: Partition) -> bool:
        """Equality up to label renaming (and universe order)."""
        return self.canonical().labels == other.canonical().labels

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "method_tag": self.method_tag,
            "universe": list(self.universe),
            "labels": [int(self.labels[ip]) for ip in self.universe],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> Partition:
        universe = tuple(data["universe"])
        return cls(universe, dict(zip(universe, data["labels"])), data.get("method_tag", ""))

    def csv_rows(self) -> list[tuple[str, str, int]]:
        return [(ip, self.method_tag, int(self.labels[ip])) for ip in self.universe]


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric non-negative dissimilarities with zero diagonal."""

    index: tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        n = len(self.index)
        if d.shape != (n, n):
            raise ValueError(f"matrix shape {d.shape} does not match index of {n}")
        if not np.all(np.isfinite(d)):
            raise ValueError("distance matrix has non-finite entries")
        if np.any(d < 0):
            raise ValueError("distance matrix has negative entries")
        if not np.array_equal(d, d.T):
            raise ValueError("distance matrix is not symmetric")
        if np.any(np.diag(d) != 0):
            raise ValueError("distance matrix has a non-zero diagonal")
        object.__setattr__(self, "index", tuple(self.index))
        object.__setattr__(self, "d", d)

    def __len__(self) -> int:
        return len(self.index)

    def reordered(self, order: Sequence[str]) -> DistanceMatrix:
        pos = {k: i for i, k in enumerate(self.index)}
        idx = np.array([pos[k] for k in order], dtype=np.int64)
        return DistanceMatrix(tuple(order), self.d[np.ix_(idx, idx)])

    def canonical(self) -> DistanceMatrix:
        return self.reordered(sorted(self.index, key=ip_sort_key))
