"""The six per-region feature clusterers: each maps IP profiles to a Partition."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .algorithms import (
    NOISE,
    DistanceMatrix,
    Partition,
    adjacency,
    connected_components,
    dtw_matrix,
    greedy_modularity,
    jaccard_matrix,
    optics,
    optics_labels,
    sort_items,
    spectral_cluster,
)
from .profile import CapabilityMap, IpProfile, classify_port, embed_session

logger = logging.getLogger(__name__)

METHODS = ("heuristic", "outbound", "intervals", "sessions", "credlists", "credshare")


def load_common_credentials(path: str | Path | None = None) -> frozenset[tuple[str, str]]:
    """Read ``username:password`` lines; ``#`` starts a comment line."""
    if path is None:
        text = resources.files("honeycluster.data").joinpath("common_credentials.txt").read_text()
    else:
        text = Path(path).read_text()
    creds = set()
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        user, _, password = line.partition(":")
        creds.add((user, password))
    return frozenset(creds)


@dataclass(frozen=True)
class OpticsConfig:
    min_samples: int = 3
    xi: float = 0.05


@dataclass(frozen=True)
class SpectralConfig:
    k_min: int = 2
    k_max: int = 10
    seed: int = 0


@dataclass(frozen=True)
class HeuristicConfig:
    min_credentials: int = 5
    min_commands: int = 5

    def __post_init__(self):
        if self.min_credentials < 1 or self.min_commands < 1:
            raise ValueError("heuristic thresholds must be >= 1")


@dataclass(frozen=True)
class IntervalConfig:
    window_length: int = 14 * 86400  # seconds
    bin_width: int = 60  # seconds
    dtw_band: int = 60  # bins
    min_shared_windows: int = 1
    co_cluster_distance_threshold: float = 0.5

    def __post_init__(self):
        if self.bin_width <= 0 or self.window_length <= self.bin_width:
            raise ValueError("need window_length > bin_width > 0")
        if self.dtw_band < 0:
            raise ValueError("dtw_band must be >= 0")
        if self.min_shared_windows < 1:
            raise ValueError("min_shared_windows must be >= 1")


@dataclass(frozen=True)
class CredShareConfig:
    common_credentials: frozenset[tuple[str, str]] | None = None  # None: shipped list
    common_rule: str = "list"  # "list" or "frequency"
    frequency_threshold: float = 0.01
    active_ttl: int = 3600  # seconds; consumed by the generator

    def __post_init__(self):
        if self.common_rule not in ("list", "frequency"):
            raise ValueError(f"unknown common_rule {self.common_rule!r}")

    def common_filter(self, profiles: Mapping[str, IpProfile]) -> frozenset[tuple[str, str]]:
        if self.common_rule == "frequency":
            counts = Counter(c for p in profiles.values() for c in p.credential_set)
            cutoff = self.frequency_threshold * max(len(profiles), 1)
            return frozenset(c for c, n in counts.items() if n > cutoff)
        if self.common_credentials is not None:
            return frozenset(self.common_credentials)
        return load_common_credentials()


@dataclass(frozen=True)
class FeatureConfig:
    heuristic: HeuristicConfig = field(default_factory=HeuristicConfig)
    intervals: IntervalConfig = field(default_factory=IntervalConfig)
    credshare: CredShareConfig = field(default_factory=CredShareConfig)
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)


def _chain(groups: Iterable[list[str]]) -> list[tuple[str, str]]:
    """Edges linking each group into one component (a path is enough)."""
    edges = []
    for members in groups:
        members = sort_items(members)
        edges.extend(zip(members, members[1:]))
    return edges


# --- heuristic --------------------------------------------------------------


def heuristic_edges(profiles: Mapping[str, IpProfile], cfg: HeuristicConfig) -> list[tuple[str, str]]:
    by_creds: dict[frozenset, list[str]] = defaultdict(list)
    by_script: dict[tuple, set[str]] = defaultdict(set)
    by_target: dict[tuple, set[str]] = defaultdict(set)
    for ip, prof in profiles.items():
        if len(prof.credential_set) >= cfg.min_credentials:
            by_creds[frozenset(prof.credential_set)].append(ip)
        for _, seq in prof.command_sequences:
            if len(seq) >= cfg.min_commands:
                by_script[seq].add(ip)
        for host, port in prof.outbound_domains:
            if classify_port(port) == "unusual":
                by_target[(host, port)].add(ip)
    groups = [*by_creds.values(), *map(list, by_script.values()), *map(list, by_target.values())]
    return _chain(g for g in groups if len(g) > 1)


def cluster_heuristic(profiles: Mapping[str, IpProfile], cfg: HeuristicConfig = HeuristicConfig()) -> Partition:
    """Connected components over exact-match links; isolated IPs are left out."""
    edges = heuristic_edges(profiles, cfg)
    nodes = sort_items(ip for e in edges for ip in e)
    return connected_components(nodes, edges, "heuristic")


# --- outbound ---------------------------------------------------------------


def cluster_outbound(
    profiles: Mapping[str, IpProfile], k_min: int = 2, k_max: int = 10, seed: int = 0
) -> Partition:
    """Spectral clustering of the shared-host graph, one connected component at a time."""
    nodes = sort_items(ip for ip, p in profiles.items() if p.outbound_domains)
    if not nodes:
        return Partition.empty("outbound")
    by_host: dict[str, list[str]] = defaultdict(list)
    for ip in nodes:
        for host in sorted(profiles[ip].outbound_hosts):
            by_host[host].append(ip)
    edges = [(a, b) for members in by_host.values() for i, a in enumerate(members) for b in members[i + 1 :]]
    adj = adjacency(nodes, edges)
    comps = connected_components(nodes, edges).clusters()
    pos = {ip: i for i, ip in enumerate(nodes)}
    raw = np.empty(len(nodes), dtype=np.int64)
    next_label = 0
    for members in comps.values():
        idx = np.array([pos[ip] for ip in members])
        if len(members) < 3:
            raw[idx] = next_label
            next_label += 1
            continue
        res = spectral_cluster(adj[np.ix_(idx, idx)], members, k_min, k_max, seed, "outbound")
        sub = res.labels.label_array
        raw[idx] = sub + next_label
        next_label += int(sub.max()) + 1
    return Partition.from_labels(nodes, raw, "outbound")


# --- probe intervals --------------------------------------------------------


@dataclass(frozen=True)
class IntervalAnalysis:
    """Per-pair window statistics behind the interval clustering."""

    index: tuple[str, ...]
    co_clustered: np.ndarray  # windows where the pair landed in one cluster
    shared: np.ndarray  # windows where both were present and OPTICS could run
    n_windows: int
    partition: Partition

    def fraction(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.shared > 0, self.co_clustered / np.maximum(self.shared, 1), np.nan)

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "index": list(self.index),
            "co_clustered": self.co_clustered.astype(int).tolist(),
            "shared": self.shared.astype(int).tolist(),
            "n_windows": self.n_windows,
            "partition": self.partition.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> IntervalAnalysis:
        n = len(d["index"])
        return cls(
            tuple(d["index"]),
            np.array(d["co_clustered"], dtype=np.int64).reshape(n, n),
            np.array(d["shared"], dtype=np.int64).reshape(n, n),
            int(d["n_windows"]),
            Partition.from_dict(d["partition"]),
        )


def probe_series(probes: list[np.ndarray], bin_width_us: int) -> np.ndarray:
    """Bin each probe list into counts over their common span; equal-length rows."""
    t0 = min(int(p.min()) for p in probes)
    t1 = max(int(p.max()) for p in probes)
    length = (t1 - t0) // bin_width_us + 1
    out = np.zeros((len(probes), length), dtype=np.float64)
    for i, p in enumerate(probes):
        np.add.at(out[i], (p - t0) // bin_width_us, 1.0)
    return out


def interval_analysis(
    profiles: Mapping[str, IpProfile],
    cfg: IntervalConfig = IntervalConfig(),
    optics_cfg: OpticsConfig = OpticsConfig(),
) -> IntervalAnalysis:
    ips = sort_items(ip for ip, p in profiles.items() if len(p.probe_timestamps) >= 2)
    n = len(ips)
    co = np.zeros((n, n), dtype=np.int64)
    shared = np.zeros((n, n), dtype=np.int64)
    if n < 2:
        return IntervalAnalysis(tuple(ips), co, shared, 0, Partition.empty("intervals"))
    window_us = cfg.window_length * 1_000_000
    bin_us = cfg.bin_width * 1_000_000
    stamps = [np.asarray(profiles[ip].probe_timestamps, dtype=np.int64) for ip in ips]
    origin = min(int(s.min()) for s in stamps)
    per_window: dict[int, dict[int, np.ndarray]] = defaultdict(dict)
    for i, s in enumerate(stamps):
        w = (s - origin) // window_us
        for win in np.unique(w):
            sel = s[w == win]
            if len(sel) >= 2:
                per_window[int(win)][i] = sel
    for win in sorted(per_window):
        members = sorted(per_window[win])
        if len(members) < max(2, optics_cfg.min_samples):
            continue
        series = probe_series([per_window[win][i] for i in members], bin_us)
        d = dtw_matrix(series, cfg.dtw_band)
        labels = optics_labels(d, optics_cfg.min_samples, optics_cfg.xi)
        idx = np.array(members)
        shared[np.ix_(idx, idx)] += 1
        same = (labels[:, None] == labels[None, :]) & (labels[:, None] != NOISE)
        co[np.ix_(idx, idx)] += same.astype(np.int64)
        logger.debug("interval window %d: %d IPs, %d clusters", win, len(members), labels.max() + 1)
    np.fill_diagonal(shared, 0)
    np.fill_diagonal(co, 0)

    linked = (shared >= cfg.min_shared_windows).any(axis=1)
    keep = np.flatnonzero(linked)
    if keep.size == 0:
        return IntervalAnalysis(tuple(ips), co, shared, len(per_window), Partition.empty("intervals"))
    sub_shared = shared[np.ix_(keep, keep)]
    sub_co = co[np.ix_(keep, keep)]
    dist = np.ones_like(sub_shared, dtype=np.float64)
    ok = sub_shared >= cfg.min_shared_windows
    dist[ok] = 1.0 - sub_co[ok] / sub_shared[ok]
    np.fill_diagonal(dist, 0.0)
    dm = DistanceMatrix(tuple(ips[i] for i in keep), dist)
    part = optics(dm, optics_cfg.min_samples, optics_cfg.xi, "intervals")
    return IntervalAnalysis(tuple(ips), co, shared, len(per_window), part)


def cluster_intervals(
    profiles: Mapping[str, IpProfile],
    cfg: IntervalConfig = IntervalConfig(),
    optics_cfg: OpticsConfig = OpticsConfig(),
) -> Partition:
    """DTW + OPTICS per window, then OPTICS over 1 - co-clustered fraction."""
    return interval_analysis(profiles, cfg, optics_cfg).partition


# --- session activity -------------------------------------------------------


def session_embeddings(
    profiles: Mapping[str, IpProfile], cap_map: CapabilityMap
) -> tuple[list[tuple[str, str]], np.ndarray, np.ndarray]:
    """(ip, session_id) keys, stacked (N, L, V) codes and true lengths.

    Each IP contributes each distinct command sequence once (keyed by the
    first session that ran it): repeats from one IP would otherwise let a
    single busy IP pass for a dense cluster.
    """
    keys, seqs = [], []
    for ip in sort_items(profiles):
        seen = set()
        for sid, seq in profiles[ip].command_sequences:
            if seq and seq not in seen:
                seen.add(seq)
                keys.append((ip, sid))
                seqs.append(embed_session(seq, cap_map))
    n = len(seqs)
    width = max((len(s) for s in seqs), default=0)
    codes = np.zeros((n, width, cap_map.width), dtype=np.uint8)
    lengths = np.zeros(n, dtype=np.int64)
    for i, s in enumerate(seqs):
        codes[i, : len(s)] = s
        lengths[i] = len(s)
    return keys, codes, lengths


def session_distance_matrix(codes: np.ndarray, lengths: np.ndarray, n_bits: int) -> np.ndarray:
    """Pairwise padded, position-averaged normalised Hamming distance."""
    if codes.shape[0] == 0:
        return np.zeros((0, 0))
    return kernels.padded_hamming(np.ascontiguousarray(codes), lengths.astype(np.int64), int(n_bits))


def session_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two embedded sessions (rows are capability vectors)."""
    length = max(len(a), len(b))
    if length == 0:
        return 0.0
    width = a.shape[1] if len(a) else b.shape[1]
    pa = np.zeros((length, width), dtype=np.int64)
    pb = np.zeros((length, width), dtype=np.int64)
    pa[: len(a)] = a
    pb[: len(b)] = b
    return float((pa != pb).sum(axis=1).mean() / width)


def lift_to_ips(keys: list[tuple[str, str]], session_labels: np.ndarray) -> tuple[list[str], list[int]]:
    """Majority vote of each IP's non-noise sessions; ties to the lowest label."""
    votes: dict[str, Counter] = defaultdict(Counter)
    for (ip, _), lab in zip(keys, session_labels):
        votes[ip]  # every IP gets an entry, even all-noise ones
        if lab != NOISE:
            votes[ip][int(lab)] += 1
    universe = sort_items(votes)
    raw = []
    for ip in universe:
        c = votes[ip]
        if not c:
            raw.append(NOISE)
        else:
            top = max(c.values())
            raw.append(min(lab for lab, n in c.items() if n == top))
    return universe, raw


def cluster_sessions(
    profiles: Mapping[str, IpProfile],
    cap_map: CapabilityMap | None = None,
    optics_cfg: OpticsConfig = OpticsConfig(),
) -> Partition:
    """OPTICS over sessions' capability sequences, lifted back to IPs."""
    cap_map = cap_map or CapabilityMap.load()
    keys, codes, lengths = session_embeddings(profiles, cap_map)
    if not keys:
        return Partition.empty("sessions")
    d = session_distance_matrix(codes, lengths, cap_map.width)
    labels = optics_labels(d, optics_cfg.min_samples, optics_cfg.xi)
    universe, raw = lift_to_ips(keys, labels)
    return Partition.from_labels(universe, raw, "sessions")


# --- credential lists -------------------------------------------------------


def cluster_credlists(profiles: Mapping[str, IpProfile], optics_cfg: OpticsConfig = OpticsConfig()) -> Partition:
    """OPTICS over pairwise Jaccard distance of attempted credential sets."""
    ips = sort_items(ip for ip, p in profiles.items() if p.credential_set)
    if not ips:
        return Partition.empty("credlists")
    d = jaccard_matrix([profiles[ip].credential_set for ip in ips])
    return optics(DistanceMatrix(tuple(ips), d), optics_cfg.min_samples, optics_cfg.xi, "credlists")


# --- credential sharing -----------------------------------------------------


def credshare_edges(
    profiles: Mapping[str, IpProfile], common: frozenset[tuple[str, str]]
) -> list[tuple[str, str]]:
    """Edges from each first-try IP to every earlier discoverer of its credential."""
    discoverers: dict[tuple[str, str], list[tuple[int, str]]] = defaultdict(list)
    for ip, prof in profiles.items():
        for user, password, t in prof.successful_credentials:
            discoverers[(user, password)].append((t, ip))
    edges = []
    for ip in sort_items(profiles):
        prof = profiles[ip]
        if not prof.first_attempt_success or not prof.successful_credentials:
            continue
        user, password, t_login = min(prof.successful_credentials, key=lambda c: (c[2], c[0], c[1]))
        cred = (user, password)
        if cred in common:
            continue
        for t, other in discoverers[cred]:
            if other != ip and t < t_login:
                edges.append((ip, other))
    return edges


def cluster_credshare(
    profiles: Mapping[str, IpProfile], cfg: CredShareConfig = CredShareConfig()
) -> Partition:
    """Greedy-modularity communities of the credential-sharing graph."""
    edges = credshare_edges(profiles, cfg.common_filter(profiles))
    nodes = sort_items(ip for e in edges for ip in e)
    if not nodes:
        return Partition.empty("credshare")
    comm = greedy_modularity(nodes, edges, "credshare").labels
    singles = [ip for members in comm.clusters().values() if len(members) == 1 for ip in members]
    clusters = [m for m in comm.clusters().values() if len(m) > 1]
    return Partition.from_clusters(clusters, "credshare", noise=singles)


# --- all features -----------------------------------------------------------


@dataclass
class FeatureResults:
    partitions: dict[str, Partition]
    intervals: IntervalAnalysis | None = None


def run_features(
    profiles: Mapping[str, IpProfile],
    cfg: FeatureConfig = FeatureConfig(),
    cap_map: CapabilityMap | None = None,
    only: Iterable[str] | None = None,
) -> FeatureResults:
    wanted = list(METHODS) if only is None else list(only)
    unknown = set(wanted) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown feature methods: {sorted(unknown)}")
    out: dict[str, Partition] = {}
    intervals = None
    for name in METHODS:
        if name not in wanted:
            continue
        if name == "heuristic":
            out[name] = cluster_heuristic(profiles, cfg.heuristic)
        elif name == "outbound":
            sc = cfg.spectral
            out[name] = cluster_outbound(profiles, sc.k_min, sc.k_max, sc.seed)
        elif name == "intervals":
            intervals = interval_analysis(profiles, cfg.intervals, cfg.optics)
            out[name] = intervals.partition
        elif name == "sessions":
            out[name] = cluster_sessions(profiles, cap_map, cfg.optics)
        elif name == "credlists":
            out[name] = cluster_credlists(profiles, cfg.optics)
        elif name == "credshare":
            out[name] = cluster_credshare(profiles, cfg.credshare)
        p = out[name]
        logger.info("%s: %d IPs, %d clusters, %d noise", name, len(p), p.n_clusters, len(p.noise))
    return FeatureResults(out, intervals)


def write_partition(partition: Partition, json_path: str | Path, csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(json.dumps(partition.to_dict(), indent=1) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["ip", "method_tag", "label"])
            writer.writerows(partition.csv_rows())


def read_partition(json_path: str | Path) -> Partition:
    return Partition.from_dict(json.loads(Path(json_path).read_text()))
