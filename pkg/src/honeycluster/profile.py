"""Per-IP behavioural profiles and session-level classifiers."""

from __future__ import annotations

import json
import logging
import re
import shlex
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .algorithms.partition import sort_items
from .ingest import CommandEvent, SessionRecord

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

WEB_PORTS = frozenset({80, 443})
MAIL_PORTS = frozenset({25, 110, 465, 587, 993})

_SUDO_VALUE_OPTS = frozenset({"-u", "-g", "-h", "-p", "-C", "-D", "-r", "-t", "-U", "-T"})
_ASSIGNMENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*=")
_PUNCT = "();<>|&\n"
_SEPARATOR_CHARS = frozenset(";&|\n")
# Fallback statement splitter for input shlex cannot tokenize (unbalanced quotes).
_STATEMENT_SPLIT = re.compile(r"&&|\|\||[;|\n&]")


class ProfileError(Exception):
    pass


# --- ports ----------------------------------------------------------------


def classify_port(port: int) -> str:
    """web, mail or unusual."""
    port = int(port)
    if not 1 <= port <= 65535:
        raise ValueError(f"port {port} out of range")
    if port in WEB_PORTS:
        return "web"
    if port in MAIL_PORTS:
        return "mail"
    return "unusual"


# --- commands -------------------------------------------------------------


def _binary_name(token: str) -> str:
    if token.startswith("/"):
        stripped = token.rstrip("/")
        base = stripped.rsplit("/", 1)[-1]
        return base or token
    return token


def _first_word(tokens: list[str]) -> str | None:
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if _ASSIGNMENT.match(tok):
            i += 1
        elif tok == "sudo":
            i += 1
            while i < len(tokens) and tokens[i].startswith("-"):
                # options like -u USER carry a separate value
                i += 2 if tokens[i] in _SUDO_VALUE_OPTS else 1
        else:
            return _binary_name(tok)
    return None


def _statements(raw: str) -> list[list[str]]:
    lex = shlex.shlex(raw, posix=True, punctuation_chars=_PUNCT)
    lex.whitespace = " \t\r"
    lex.whitespace_split = True
    statements: list[list[str]] = [[]]
    skip_next = False
    for tok in lex:
        if skip_next:
            skip_next = False
            continue
        if tok and set(tok) <= set(_PUNCT):
            if "<" in tok or ">" in tok:
                # redirection: drop the operator, its target and a leading fd number
                if statements[-1] and statements[-1][-1].isdigit():
                    statements[-1].pop()
                skip_next = True
                continue
            if set(tok) & _SEPARATOR_CHARS:
                statements.append([])
            continue  # parentheses
        statements[-1].append(tok)
    return [s for s in statements if s]


def normalize_commands(
    commands: Iterable[CommandEvent | str], stats: Counter | None = None
) -> list[str]:
    """Binary names in execution order, one per statement.

    Statements are split on ``;``, ``&&``, ``||``, ``|``, ``&`` and newlines.
    ``sudo``, environment assignments and redirections are dropped; absolute
    paths are cut to their basename while relative ones (``./x.sh``) stay.
    Statements that cannot be tokenized are skipped and counted in
    ``stats["unparsable"]``.
    """
    out: list[str] = []
    for cmd in commands:
        raw = cmd.raw if isinstance(cmd, CommandEvent) else cmd
        try:
            statements = _statements(raw)
        except ValueError:
            statements = []
            for piece in _STATEMENT_SPLIT.split(raw):
                if not piece.strip():
                    continue
                try:
                    statements.extend(_statements(piece))
                except ValueError:
                    if stats is not None:
                        stats["unparsable"] += 1
                    logger.debug("unparsable statement %r", piece)
        for tokens in statements:
            name = _first_word(tokens)
            if name:
                out.append(name)
    return out


# --- capabilities ---------------------------------------------------------


@dataclass(frozen=True)
class CapabilityMap:
    vocabulary: tuple[str, ...]
    binaries: Mapping[str, frozenset[str]]
    version: int = 1

    def __post_init__(self):
        vocab = set(self.vocabulary)
        if len(vocab) != len(self.vocabulary):
            raise ProfileError("duplicate capability tags")
        for name, tags in self.binaries.items():
            unknown = set(tags) - vocab
            if unknown:
                raise ProfileError(f"{name} uses tags outside the vocabulary: {sorted(unknown)}")

    @property
    def width(self) -> int:
        return len(self.vocabulary)

    def vector(self, binary: str) -> np.ndarray:
        vec = np.zeros(self.width, dtype=np.uint8)
        for tag in self.binaries.get(binary, ()):
            vec[self.vocabulary.index(tag)] = 1
        return vec

    @classmethod
    def from_dict(cls, data: Mapping) -> CapabilityMap:
        if "version" not in data:
            raise ProfileError("capability map has no version")
        return cls(
            tuple(data["vocabulary"]),
            {k: frozenset(v) for k, v in data["binaries"].items()},
            int(data["version"]),
        )

    @classmethod
    def load(cls, path: str | Path | None = None) -> CapabilityMap:
        if path is None:
            text = resources.files("honeycluster.data").joinpath("capabilities.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def embed_session(binaries: Sequence[str], cap_map: CapabilityMap) -> np.ndarray:
    """One capability bit-vector per binary, shape (len(binaries), V)."""
    out = np.zeros((len(binaries), cap_map.width), dtype=np.uint8)
    for i, name in enumerate(binaries):
        out[i] = cap_map.vector(name)
    return out


# --- human flag -----------------------------------------------------------


@dataclass(frozen=True)
class HumanFlagConfig:
    max_delta_threshold: float = 0.1  # seconds
    outlier_rule: float = 1.5  # IQR multiplier

    def __post_init__(self):
        if self.max_delta_threshold <= 0:
            raise ValueError("max_delta_threshold must be > 0")
        if self.outlier_rule < 0:
            raise ValueError("outlier_rule must be >= 0")


@dataclass(frozen=True)
class HumanFlag:
    is_human: bool
    rules_fired: frozenset[str]
    not_evaluable: frozenset[str] = frozenset()


def max_keystroke_delta(session: SessionRecord) -> int | None:
    """Largest gap between consecutive TTY keystrokes, in microseconds."""
    if session.keystroke_source != "tty" or len(session.keystrokes) < 2:
        return None
    ts = np.fromiter((k.timestamp for k in session.keystrokes), dtype=np.int64)
    return int(np.diff(ts).max())


def tukey_fence(values: Sequence[float], multiplier: float = 1.5) -> float | None:
    if len(values) == 0:
        return None
    q1, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 75])
    return float(q3 + multiplier * (q3 - q1))


def flag_human(
    session: SessionRecord,
    all_session_max_deltas: Sequence[float],
    cfg: HumanFlagConfig = HumanFlagConfig(),
) -> HumanFlag:
    """Apply the three keystroke rules: erase key, outlier max gap, absolute max gap.

    Rules 2 and 3 need real per-key timing; sessions without it report them in
    ``not_evaluable`` and can only fire rule 1.
    """
    fired = set()
    skipped = set()
    if any(k.char_class == "erase" for k in session.keystrokes):
        fired.add("backspace")
    delta_us = max_keystroke_delta(session)
    if delta_us is None:
        skipped.update({"outlier", "threshold"})
    else:
        fence = tukey_fence(all_session_max_deltas, cfg.outlier_rule)
        if fence is None:
            skipped.add("outlier")
        elif delta_us / 1e6 > fence:
            fired.add("outlier")
        if delta_us > round(cfg.max_delta_threshold * 1_000_000):
            fired.add("threshold")
    return HumanFlag(bool(fired), frozenset(fired), frozenset(skipped))


# --- profiles -------------------------------------------------------------


@dataclass
class IpProfile:
    ip: str
    regions: set[str] = field(default_factory=set)
    sessions: list[str] = field(default_factory=list)
    credential_set: set[tuple[str, str]] = field(default_factory=set)
    command_sequences: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)
    outbound_domains: set[tuple[str, int]] = field(default_factory=set)
    probe_timestamps: list[int] = field(default_factory=list)
    first_attempt_success: bool = False
    successful_credentials: set[tuple[str, str, int]] = field(default_factory=set)
    hassh_values: Counter = field(default_factory=Counter)
    human_sessions: list[str] = field(default_factory=list)

    @property
    def outbound_hosts(self) -> set[str]:
        return {h for h, _ in self.outbound_domains}

    def capability_sequences(self, cap_map: CapabilityMap) -> list[tuple[str, np.ndarray]]:
        return [(sid, embed_session(seq, cap_map)) for sid, seq in self.command_sequences]

    def to_dict(self) -> dict:
        return {
            "ip": self.ip,
            "regions": sorted(self.regions),
            "sessions": list(self.sessions),
            "credential_set": sorted([u, p] for u, p in self.credential_set),
            "command_sequences": [[sid, list(seq)] for sid, seq in self.command_sequences],
            "outbound_domains": sorted([h, p] for h, p in self.outbound_domains),
            "probe_timestamps": list(self.probe_timestamps),
            "first_attempt_success": self.first_attempt_success,
            "successful_credentials": sorted([u, p, t] for u, p, t in self.successful_credentials),
            "hassh_values": dict(sorted(self.hassh_values.items())),
            "human_sessions": list(self.human_sessions),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> IpProfile:
        return cls(
            ip=d["ip"],
            regions=set(d["regions"]),
            sessions=list(d["sessions"]),
            credential_set={(u, p) for u, p in d["credential_set"]},
            command_sequences=[(sid, tuple(seq)) for sid, seq in d["command_sequences"]],
            outbound_domains={(h, int(p)) for h, p in d["outbound_domains"]},
            probe_timestamps=[int(t) for t in d["probe_timestamps"]],
            first_attempt_success=bool(d["first_attempt_success"]),
            successful_credentials={(u, p, int(t)) for u, p, t in d["successful_credentials"]},
            hassh_values=Counter(d["hassh_values"]),
            human_sessions=list(d["human_sessions"]),
        )


def build_profiles(
    sessions: Mapping[str, SessionRecord], human_cfg: HumanFlagConfig = HumanFlagConfig()
) -> dict[str, IpProfile]:
    """Fold sessions into one profile per source IP, keyed in IP order."""
    by_ip: dict[str, list[SessionRecord]] = {}
    for rec in sessions.values():
        by_ip.setdefault(rec.src_ip, []).append(rec)

    deltas = [d / 1e6 for d in (max_keystroke_delta(r) for r in sessions.values()) if d is not None]

    profiles: dict[str, IpProfile] = {}
    for ip in sort_items(by_ip):
        recs = sorted(by_ip[ip], key=lambda r: (r.start, r.session_id))
        prof = IpProfile(ip)
        attempts = []
        first_success: dict[tuple[str, str], int] = {}
        for rec in recs:
            prof.sessions.append(rec.session_id)
            prof.probe_timestamps.append(rec.start)
            if rec.region:
                prof.regions.add(rec.region)
            for login in rec.logins:
                if login.method != "password":
                    continue
                cred = (login.username, login.password)
                prof.credential_set.add(cred)
                attempts.append((login.timestamp, rec.session_id, login.success))
                if login.success and (cred not in first_success or login.timestamp < first_success[cred]):
                    first_success[cred] = login.timestamp
            if rec.commands:
                prof.command_sequences.append((rec.session_id, tuple(normalize_commands(rec.commands))))
            prof.outbound_domains.update((o.dst_host, o.dst_port) for o in rec.outbound)
            if rec.hassh:
                prof.hassh_values[rec.hassh] += 1
            if flag_human(rec, deltas, human_cfg).is_human:
                prof.human_sessions.append(rec.session_id)
        attempts.sort()
        prof.first_attempt_success = bool(attempts) and attempts[0][2]
        prof.successful_credentials = {(u, p, t) for (u, p), t in first_success.items()}
        profiles[ip] = prof
    return profiles


def hassh_stats(profiles: Mapping[str, IpProfile]) -> dict[str, tuple[int, int]]:
    """hassh -> (session count, IP count), most common first."""
    sessions: Counter = Counter()
    ips: Counter = Counter()
    for prof in profiles.values():
        for h, n in prof.hassh_values.items():
            sessions[h] += n
            ips[h] += 1
    order = sorted(sessions, key=lambda h: (-sessions[h], h))
    return {h: (sessions[h], ips[h]) for h in order}


def port_stats(sessions: Mapping[str, SessionRecord]) -> dict[str, int]:
    counts = Counter({"web": 0, "mail": 0, "unusual": 0})
    for rec in sessions.values():
        for o in rec.outbound:
            counts[classify_port(o.dst_port)] += 1
    return dict(counts)


def profiles_to_dict(profiles: Mapping[str, IpProfile], region: str = "") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "region": region,
        "profiles": [profiles[ip].to_dict() for ip in sort_items(profiles)],
    }


def profiles_from_dict(data: Mapping) -> dict[str, IpProfile]:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ProfileError(f"unsupported profile store version {data.get('schema_version')!r}")
    return {d["ip"]: IpProfile.from_dict(d) for d in data["profiles"]}
