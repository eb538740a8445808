"""Per-cluster feature-agreement reports (Markdown, JSON, CSV)."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .algorithms import Partition, jaccard_matrix
from .features import IntervalAnalysis, session_distance_matrix, session_embeddings
from .profile import CapabilityMap, IpProfile

FEATURES = ("credential_list", "session_activity", "outbound_request", "probe_interval")
_MARK = {True: "yes", False: "no", None: "n/a"}


@dataclass(frozen=True)
class ReportConfig:
    max_jaccard_distance: float = 0.3
    max_session_distance: float = 0.2
    min_outbound_share: float = 0.5
    min_interval_fraction: float = 0.5


@dataclass(frozen=True)
class ClusterReport:
    cluster_id: int
    member_ips: tuple[str, ...]
    flags: Mapping[str, bool | None]  # None: not evaluable
    stats: Mapping[str, float | int | None]
    human_sessions: int
    hassh_summary: Mapping[str, int] = field(default_factory=dict)

    @property
    def matched(self) -> tuple[str, ...]:
        return tuple(f for f in FEATURES if self.flags[f])

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "member_ips": list(self.member_ips),
            "flags": {f: self.flags[f] for f in FEATURES},
            "stats": dict(self.stats),
            "human_sessions": self.human_sessions,
            "hassh_summary": dict(self.hassh_summary),
        }


def _mean_offdiag(d: np.ndarray) -> float | None:
    n = d.shape[0]
    if n < 2:
        return None
    return float(d[~np.eye(n, dtype=bool)].mean())


def _credential_stat(members, profiles):
    sets = [profiles[ip].credential_set for ip in members if profiles[ip].credential_set]
    return _mean_offdiag(jaccard_matrix(sets)) if len(sets) >= 2 else None


def _session_stat(members, profiles, cap_map):
    sub = {ip: profiles[ip] for ip in members}
    keys, codes, lengths = session_embeddings(sub, cap_map)
    owners = np.array([ip for ip, _ in keys])
    if len(set(owners.tolist())) < 2:
        return None
    d = session_distance_matrix(codes, lengths, cap_map.width)
    cross = owners[:, None] != owners[None, :]
    return float(d[cross].mean())


def _outbound_stat(members, profiles):
    hosts = Counter(h for ip in members for h in profiles[ip].outbound_hosts)
    if not hosts:
        return None, 0
    top = max(hosts.values())
    shared = sum(1 for n in hosts.values() if n >= 2 and n / len(members) >= 0.5)
    return top / len(members) if top >= 2 else 0.0, shared


def _interval_stat(members, intervals: IntervalAnalysis | None):
    if intervals is None:
        return None
    pos = {ip: i for i, ip in enumerate(intervals.index)}
    idx = [pos[ip] for ip in members if ip in pos]
    if len(idx) < 2:
        return None
    sub_shared = intervals.shared[np.ix_(idx, idx)]
    sub_co = intervals.co_clustered[np.ix_(idx, idx)]
    mask = (sub_shared > 0) & ~np.eye(len(idx), dtype=bool)
    if not mask.any():
        return None
    return float((sub_co[mask] / sub_shared[mask]).mean())


def feature_agreement(
    final: Partition,
    profiles: Mapping[str, IpProfile],
    cfg: ReportConfig = ReportConfig(),
    intervals: IntervalAnalysis | None = None,
    cap_map: CapabilityMap | None = None,
) -> list[ClusterReport]:
    """Which features each final cluster agrees on, with the supporting statistics."""
    cap_map = cap_map or CapabilityMap.load()
    reports = []
    for cid, members in final.clusters().items():
        members = [ip for ip in members if ip in profiles]
        jac = _credential_stat(members, profiles)
        sess = _session_stat(members, profiles, cap_map)
        share, n_shared = _outbound_stat(members, profiles)
        frac = _interval_stat(members, intervals)
        flags = {
            "credential_list": None if jac is None else jac <= cfg.max_jaccard_distance,
            "session_activity": None if sess is None else sess <= cfg.max_session_distance,
            "outbound_request": None if share is None else share >= cfg.min_outbound_share,
            "probe_interval": None if frac is None else frac >= cfg.min_interval_fraction,
        }
        hassh = Counter()
        for ip in members:
            hassh.update(profiles[ip].hassh_values)
        reports.append(
            ClusterReport(
                cluster_id=cid,
                member_ips=tuple(members),
                flags=flags,
                stats={
                    "mean_jaccard_distance": jac,
                    "mean_session_distance": sess,
                    "top_outbound_host_share": share,
                    "shared_outbound_hosts": n_shared,
                    "mean_interval_cocluster_fraction": frac,
                },
                human_sessions=sum(len(profiles[ip].human_sessions) for ip in members),
                hassh_summary=dict(sorted(hassh.items(), key=lambda kv: (-kv[1], kv[0]))[:3]),
            )
        )
    return reports


def combination_label(matched: tuple[str, ...]) -> str:
    return "+".join(matched) if matched else "none"


def combination_histogram(reports: list[ClusterReport]) -> dict[str, int]:
    """Clusters per matched-feature combination; 'none' counts clusters matching nothing."""
    counts = Counter(combination_label(r.matched) for r in reports)
    counts.setdefault("none", 0)  # always shown, even when zero
    order = sorted(counts, key=lambda k: (k == "none", -k.count("+"), k))
    return {k: counts[k] for k in order}


def to_json(reports: list[ClusterReport]) -> str:
    doc = {
        "schema_version": 1,
        "clusters": [r.to_dict() for r in reports],
        "combinations": combination_histogram(reports),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def to_csv(reports: list[ClusterReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["cluster_id", "size", *FEATURES, "human_sessions", "members"])
    for r in reports:
        writer.writerow(
            [r.cluster_id, len(r.member_ips), *(_MARK[r.flags[f]] for f in FEATURES), r.human_sessions,
             " ".join(r.member_ips)]
        )
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def to_markdown(reports: list[ClusterReport], title: str = "Cluster report") -> str:
    lines = [f"# {title}", ""]
    if not reports:
        lines.append("No clusters.")
        return "\n".join(lines) + "\n"
    lines += ["## Feature agreement", ""]
    header = ["cluster", "size", "credential list", "session activity", "outbound request", "probe interval"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for r in reports:
        row = [str(r.cluster_id), str(len(r.member_ips)), *(_MARK[r.flags[f]] for f in FEATURES)]
        lines.append("| " + " | ".join(row) + " |")
    hist = combination_histogram(reports)
    lines += ["", "## Clusters matched per feature combination", ""]
    lines.append("| " + " | ".join(hist) + " | total |")
    lines.append("|" + "---|" * (len(hist) + 1))
    lines.append("| " + " | ".join(str(v) for v in hist.values()) + f" | {sum(hist.values())} |")
    lines += ["", "## Details", ""]
    for r in reports:
        lines.append(f"### Cluster {r.cluster_id} ({len(r.member_ips)} IPs)")
        lines.append("")
        lines.append("Members: " + ", ".join(r.member_ips))
        lines.append("")
        for key, val in r.stats.items():
            lines.append(f"- {key.replace('_', ' ')}: {_fmt(val)}")
        lines.append(f"- human sessions: {r.human_sessions}")
        if r.hassh_summary:
            lines.append("- hassh: " + ", ".join(f"{h} ({n})" for h, n in r.hassh_summary.items()))
        lines.append("")
    return "\n".join(lines)
