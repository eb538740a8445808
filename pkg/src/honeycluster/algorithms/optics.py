"""OPTICS ordering with xi-steep cluster extraction over precomputed distances.

eps is unbounded, so every point is reachable from every core point. Ties in
the processing order go to the lowest index; the Partition-level entry point
sorts items first, which makes the result independent of input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from .partition import NOISE, DistanceMatrix, Partition, compact_labels

_DECIMALS = np.finfo(np.float64).precision


@dataclass(frozen=True)
class ReachabilityPlot:
    ordering: np.ndarray
    core: np.ndarray
    reachability: np.ndarray
    predecessor: np.ndarray


def core_distances(d: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the ``min_samples``-th nearest point, the point itself included."""
    n = d.shape[0]
    if n < min_samples:
        return np.full(n, np.inf)
    core = np.partition(d, min_samples - 1, axis=1)[:, min_samples - 1]
    return np.round(core, _DECIMALS)


def reachability_plot(d: np.ndarray, min_samples: int) -> ReachabilityPlot:
    # Rounding commutes with max(), so pre-rounding d gives rounded reachabilities.
    d = np.round(np.asarray(d, dtype=np.float64), _DECIMALS)
    core = core_distances(d, min_samples)
    ordering, reach, pred = kernels.optics_graph(np.ascontiguousarray(d), core)
    return ReachabilityPlot(ordering, core, reach, pred)


def _extend(steep, against, start, min_samples):
    """Grow a steep area from ``start``; return its last steep index."""
    n = len(steep)
    flat = 0
    end = start
    idx = start
    while idx < n:
        if steep[idx]:
            flat = 0
            end = idx
        elif not against[idx]:
            flat += 1
            if flat > min_samples:
                break
        else:
            break
        idx += 1
    return end


def _predecessor_fix(r, pred_plot, order, s, e):
    while s < e:
        if r[s] > r[e]:
            return s, e
        p = pred_plot[e]
        if np.any(order[s:e] == p):
            return s, e
        e -= 1
    return None, None


def xi_clusters(
    plot: ReachabilityPlot, min_samples: int, xi: float, min_cluster_size: int | None = None
) -> list[tuple[int, int]]:
    """Cluster intervals [start, end] over the ordering; nested ones come first."""
    if min_cluster_size is None:
        min_cluster_size = min_samples
    order = plot.ordering
    r = np.append(plot.reachability[order], np.inf)
    pred_plot = plot.predecessor[order]
    keep = 1.0 - xi
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = r[:-1] / r[1:]
    steep_up = ratio <= keep
    steep_down = ratio >= 1.0 / keep
    down = ratio > 1
    up = ratio < 1

    areas: list[dict] = []  # steep-down areas still open
    found: list[tuple[int, int]] = []
    pos = 0
    mib = 0.0
    for steep in np.flatnonzero(steep_up | steep_down):
        if steep < pos:
            continue
        mib = max(mib, float(np.max(r[pos : steep + 1])))
        if np.isinf(mib):
            areas = []
        else:
            areas = [a for a in areas if mib <= r[a["start"]] * keep]
            for a in areas:
                a["mib"] = max(a["mib"], mib)
        if steep_down[steep]:
            end = _extend(steep_down, up, steep, min_samples)
            areas.append({"start": int(steep), "end": end, "mib": 0.0})
            pos = end + 1
            mib = r[pos]
            continue

        u_start = int(steep)
        u_end = _extend(steep_up, down, u_start, min_samples)
        pos = u_end + 1
        mib = r[pos]
        batch = []
        for a in areas:
            c_start, c_end = a["start"], u_end
            if r[c_end + 1] * keep < a["mib"]:
                continue
            top = r[a["start"]]
            if top * keep >= r[c_end + 1]:
                while r[c_start + 1] > r[c_end + 1] and c_start < a["end"]:
                    c_start += 1
            elif r[c_end + 1] * keep >= top:
                while r[c_end - 1] > top and c_end > u_start:
                    c_end -= 1
            c_start, c_end = _predecessor_fix(r, pred_plot, order, c_start, c_end)
            if c_start is None:
                continue
            if c_end - c_start + 1 < min_cluster_size:
                continue
            if c_start > a["end"] or c_end < u_start:
                continue
            batch.append((c_start, c_end))
        found.extend(reversed(batch))
    return found


def optics_labels(
    d: np.ndarray, min_samples: int = 3, xi: float = 0.05, min_cluster_size: int | None = None
) -> np.ndarray:
    """Array-level OPTICS: labels per row of ``d``, NOISE for unclustered points."""
    if min_samples < 2:
        raise ValueError("min_samples must be >= 2")
    if not 0 < xi < 1:
        raise ValueError("xi must lie in (0, 1)")
    n = d.shape[0]
    if n < min_samples:
        return np.full(n, NOISE, dtype=np.int64)
    plot = reachability_plot(d, min_samples)
    spans = xi_clusters(plot, min_samples, xi, min_cluster_size)
    in_order = np.full(n, NOISE, dtype=np.int64)
    label = 0
    for start, end in spans:
        if np.all(in_order[start : end + 1] == NOISE):
            in_order[start : end + 1] = label
            label += 1
    labels = np.empty(n, dtype=np.int64)
    labels[plot.ordering] = in_order
    return compact_labels(labels)


def optics(
    dm: DistanceMatrix, min_samples: int = 3, xi: float = 0.05, method_tag: str = "optics"
) -> Partition:
    canon = dm.canonical()
    return Partition.from_labels(canon.index, optics_labels(canon.d, min_samples, xi), method_tag)
