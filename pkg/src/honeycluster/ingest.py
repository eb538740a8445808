"""Cowrie JSON-lines parsing and session assembly."""

from __future__ import annotations

import gzip
import ipaddress
import json
import logging
import re
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CONNECT = "cowrie.session.connect"
CLOSED = "cowrie.session.closed"
LOGIN_SUCCESS = "cowrie.login.success"
LOGIN_FAILED = "cowrie.login.failed"
COMMAND = "cowrie.command.input"
DIRECT_TCPIP = "cowrie.direct-tcpip.request"
CLIENT_KEX = "cowrie.client.kex"
CLIENT_FINGERPRINT = "cowrie.client.fingerprint"
LOG_OPEN = "cowrie.log.open"
LOG_CLOSED = "cowrie.log.closed"
# Per-key TTY timing. Cowrie keeps these in binary ttylog files; we take them
# as one JSON event per key so they can travel in the same stream.
KEYSTROKE = "cowrie.ttylog.keystroke"

KNOWN_EVENTS = frozenset(
    {
        CONNECT,
        CLOSED,
        LOGIN_SUCCESS,
        LOGIN_FAILED,
        COMMAND,
        DIRECT_TCPIP,
        CLIENT_KEX,
        CLIENT_FINGERPRINT,
        LOG_OPEN,
        LOG_CLOSED,
        KEYSTROKE,
    }
)

_CORE_FIELDS = ("eventid", "session", "src_ip", "timestamp")
_RFC3339 = re.compile(
    r"^(\d{4}-\d{2}-\d{2})[Tt ](\d{2}:\d{2}:\d{2})(?:\.(\d+))?([Zz]|[+-]\d{2}:\d{2})$"
)
_HASSH = re.compile(r"^[0-9a-f]{32}$")
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

ERASE_CHARS = frozenset("\x7f\x08")


class IngestError(Exception):
    pass


class MalformedLine(IngestError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


def parse_timestamp(text: str) -> int:
    """RFC 3339 timestamp to integer UTC microseconds since the epoch."""
    m = _RFC3339.match(text.strip())
    if not m:
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    date, clock, frac, zone = m.groups()
    frac = (frac or "")[:6].ljust(6, "0")
    zone = "+00:00" if zone in ("Z", "z") else zone
    dt = datetime.fromisoformat(f"{date}T{clock}.{frac}{zone}")
    delta = dt - _EPOCH
    return (delta.days * 86400 + delta.seconds) * 1_000_000 + delta.microseconds


def format_timestamp(micros: int) -> str:
    secs, us = divmod(int(micros), 1_000_000)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{us:06d}Z"


def _as_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return str(value)
    return json.dumps(value, sort_keys=True)


@dataclass(frozen=True)
class RawEvent:
    event_id: str
    session: str
    src_ip: str
    timestamp: int  # UTC microseconds
    payload: Mapping[str, str] = field(default_factory=dict)

    @property
    def region(self) -> str:
        return self.payload.get("sensor", "")

    def sort_key(self) -> tuple:
        return (self.timestamp, self.event_id, tuple(sorted(self.payload.items())))


@dataclass
class ParseReport:
    lines_total: int = 0
    lines_skipped: int = 0
    events_by_type: Counter = field(default_factory=Counter)
    malformed_lines: list[int] = field(default_factory=list)

    @property
    def unknown_events(self) -> int:
        return sum(n for eid, n in self.events_by_type.items() if eid not in KNOWN_EVENTS)

    def merge(self, other: ParseReport) -> None:
        offset = self.lines_total
        self.lines_total += other.lines_total
        self.lines_skipped += other.lines_skipped
        self.events_by_type.update(other.events_by_type)
        self.malformed_lines.extend(offset + n for n in other.malformed_lines)

    def to_dict(self) -> dict:
        return {
            "lines_total": self.lines_total,
            "lines_skipped": self.lines_skipped,
            "events_by_type": dict(sorted(self.events_by_type.items())),
            "malformed_lines": list(self.malformed_lines),
            "unknown_events": self.unknown_events,
        }


def parse_line(text: str, line_no: int, default_region: str | None = None) -> RawEvent:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise MalformedLine(line_no, "not a JSON object")
    for key in _CORE_FIELDS:
        if key not in obj or obj[key] in (None, ""):
            raise MalformedLine(line_no, f"missing {key!r}")
    event_id = _as_text(obj["eventid"])
    src_ip = _as_text(obj["src_ip"])
    try:
        ipaddress.ip_address(src_ip)
    except ValueError:
        raise MalformedLine(line_no, f"bad src_ip {src_ip!r}") from None
    try:
        ts = parse_timestamp(_as_text(obj["timestamp"]))
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None
    payload = {
        k: _as_text(v) for k, v in obj.items() if k not in _CORE_FIELDS and v is not None
    }
    if not payload.get("sensor") and default_region:
        payload["sensor"] = default_region
    return RawEvent(event_id, _as_text(obj["session"]), src_ip, ts, payload)


def parse_log_stream(
    lines: Iterable[str], strictness: str = "lenient", default_region: str | None = None
) -> tuple[list[RawEvent], ParseReport]:
    """Parse JSON lines into events.

    Strict mode raises :class:`MalformedLine` on the first bad line; lenient
    mode skips it and records it. Blank lines are skipped in both modes.
    """
    if strictness not in ("strict", "lenient"):
        raise ValueError(f"unknown strictness {strictness!r}")
    events: list[RawEvent] = []
    report = ParseReport()
    for line_no, text in enumerate(lines, start=1):
        report.lines_total += 1
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError:
                if strictness == "strict":
                    raise MalformedLine(line_no, "not UTF-8") from None
                report.lines_skipped += 1
                report.malformed_lines.append(line_no)
                continue
        if not text.strip():
            report.lines_skipped += 1
            continue
        try:
            ev = parse_line(text, line_no, default_region)
        except MalformedLine:
            if strictness == "strict":
                raise
            report.lines_skipped += 1
            report.malformed_lines.append(line_no)
            continue
        report.events_by_type[ev.event_id] += 1
        events.append(ev)
    return events, report


def open_log(path: str | Path):
    """Open a JSON-lines file for binary line iteration, gzip or plain."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_log_file(
    path: str | Path, strictness: str = "lenient", default_region: str | None = None
) -> tuple[list[RawEvent], ParseReport]:
    with open_log(path) as fh:
        return parse_log_stream((line.rstrip(b"\r\n") for line in fh), strictness, default_region)


# --- session records -------------------------------------------------------


@dataclass(frozen=True)
class LoginAttempt:
    username: str
    password: str
    success: bool
    timestamp: int
    method: str = "password"  # or "publickey"


@dataclass(frozen=True)
class CommandEvent:
    raw: str
    timestamp: int


@dataclass(frozen=True)
class OutboundRequest:
    dst_host: str
    dst_port: int
    timestamp: int


@dataclass(frozen=True)
class Keystroke:
    timestamp: int
    char_class: str  # printable | erase | control


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    src_ip: str
    region: str
    start: int
    end: int
    logins: tuple[LoginAttempt, ...] = ()
    commands: tuple[CommandEvent, ...] = ()
    outbound: tuple[OutboundRequest, ...] = ()
    keystrokes: tuple[Keystroke, ...] = ()
    hassh: str | None = None
    keystroke_source: str = "none"  # tty | command | none

    @property
    def logged_in(self) -> bool:
        return any(l.success for l in self.logins)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> SessionRecord:
        return cls(
            session_id=d["session_id"],
            src_ip=d["src_ip"],
            region=d["region"],
            start=int(d["start"]),
            end=int(d["end"]),
            logins=tuple(LoginAttempt(**x) for x in d["logins"]),
            commands=tuple(CommandEvent(**x) for x in d["commands"]),
            outbound=tuple(OutboundRequest(**x) for x in d["outbound"]),
            keystrokes=tuple(Keystroke(**x) for x in d["keystrokes"]),
            hassh=d.get("hassh"),
            keystroke_source=d.get("keystroke_source", "none"),
        )


@dataclass
class AssemblyReport:
    sessions: int = 0
    events_used: int = 0
    events_unknown: int = 0
    events_dropped: Counter = field(default_factory=Counter)
    conflicting_sessions: list[str] = field(default_factory=list)
    keystroke_sources: Counter = field(default_factory=Counter)

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "events_used": self.events_used,
            "events_unknown": self.events_unknown,
            "events_dropped": dict(sorted(self.events_dropped.items())),
            "conflicting_sessions": list(self.conflicting_sessions),
            "keystroke_sources": dict(sorted(self.keystroke_sources.items())),
        }


def key_class(key: str) -> str:
    if any(ch in ERASE_CHARS for ch in key):
        return "erase"
    if key and all(ch.isprintable() for ch in key):
        return "printable"
    return "control"


def _build_record(session_id: str, events: list[RawEvent], report: AssemblyReport) -> SessionRecord:
    events = sorted(events, key=RawEvent.sort_key)
    region = next((e.region for e in events if e.region), "")
    logins: list[LoginAttempt] = []
    commands: list[CommandEvent] = []
    outbound: list[OutboundRequest] = []
    keys: list[Keystroke] = []
    hassh = None
    success_at = None
    for ev in events:
        eid, p = ev.event_id, ev.payload
        if eid not in KNOWN_EVENTS:
            report.events_unknown += 1
            continue
        if eid in (LOGIN_SUCCESS, LOGIN_FAILED, CLIENT_FINGERPRINT):
            success = eid == LOGIN_SUCCESS
            method = "publickey" if (eid == CLIENT_FINGERPRINT or "fingerprint" in p) else "password"
            if success and success_at is not None:
                report.events_dropped["extra_login_success"] += 1
                continue
            if success:
                success_at = ev.timestamp
            logins.append(
                LoginAttempt(p.get("username", ""), p.get("password", ""), success, ev.timestamp, method)
            )
        elif eid == COMMAND:
            raw = p.get("input", "")
            if not raw.strip():
                report.events_dropped["empty_command"] += 1
                continue
            if success_at is None:
                report.events_dropped["command_before_login"] += 1
                continue
            commands.append(CommandEvent(raw, ev.timestamp))
        elif eid == DIRECT_TCPIP:
            host = p.get("dst_ip") or p.get("dst_host") or ""
            try:
                port = int(p.get("dst_port", ""))
            except ValueError:
                port = 0
            if not host or not 1 <= port <= 65535:
                report.events_dropped["bad_outbound"] += 1
                continue
            outbound.append(OutboundRequest(host, port, ev.timestamp))
        elif eid == KEYSTROKE:
            keys.append(Keystroke(ev.timestamp, key_class(p.get("key", ""))))
        elif eid == CLIENT_KEX:
            value = p.get("hassh", "").lower()
            if _HASSH.match(value) and hassh is None:
                hassh = value
        report.events_used += 1

    if keys:
        source = "tty"
    elif commands:
        # no TTY timing: one pseudo-keystroke per command, good for rule 1 only
        keys = [
            Keystroke(c.timestamp, "erase" if any(ch in ERASE_CHARS for ch in c.raw) else "printable")
            for c in commands
        ]
        source = "command"
    else:
        source = "none"
    report.keystroke_sources[source] += 1
    return SessionRecord(
        session_id=session_id,
        src_ip=events[0].src_ip,
        region=region,
        start=events[0].timestamp,
        end=events[-1].timestamp,
        logins=tuple(logins),
        commands=tuple(commands),
        outbound=tuple(outbound),
        keystrokes=tuple(keys),
        hassh=hassh,
        keystroke_source=source,
    )


def assemble_sessions(events: Iterable[RawEvent]) -> tuple[dict[str, SessionRecord], AssemblyReport]:
    """Group events by session token into time-ordered records.

    A token seen with two source IPs is split into one record per IP, keyed
    ``"<token>/<ip>"``, and listed in ``report.conflicting_sessions``.
    """
    report = AssemblyReport()
    groups: dict[str, dict[str, list[RawEvent]]] = defaultdict(lambda: defaultdict(list))
    for ev in events:
        groups[ev.session][ev.src_ip].append(ev)
    out: dict[str, SessionRecord] = {}
    for token in sorted(groups):
        by_ip = groups[token]
        if len(by_ip) > 1:
            report.conflicting_sessions.append(token)
            logger.warning("session %s carries %d source IPs; splitting", token, len(by_ip))
            for ip in sorted(by_ip):
                sid = f"{token}/{ip}"
                out[sid] = _build_record(sid, by_ip[ip], report)
        else:
            (evs,) = by_ip.values()
            out[token] = _build_record(token, evs, report)
    report.sessions = len(out)
    return out, report


# --- emitting and storing --------------------------------------------------


def session_to_events(rec: SessionRecord) -> list[dict]:
    """Render a record back to Cowrie-style event objects (round-trip helper)."""
    base = {"session": rec.session_id, "src_ip": rec.src_ip}
    if rec.region:
        base["sensor"] = rec.region
    out: list[dict] = [{**base, "eventid": CONNECT, "timestamp": format_timestamp(rec.start)}]
    if rec.hassh:
        out.append({**base, "eventid": CLIENT_KEX, "timestamp": format_timestamp(rec.start), "hassh": rec.hassh})
    for l in rec.logins:
        ev = {
            **base,
            "eventid": LOGIN_SUCCESS if l.success else LOGIN_FAILED,
            "timestamp": format_timestamp(l.timestamp),
            "username": l.username,
            "password": l.password,
        }
        if l.method == "publickey":
            ev["fingerprint"] = "-"
        out.append(ev)
    for c in rec.commands:
        out.append({**base, "eventid": COMMAND, "timestamp": format_timestamp(c.timestamp), "input": c.raw})
    if rec.keystroke_source == "tty":
        sample = {"printable": "a", "erase": "\x7f", "control": "\x03"}
        for k in rec.keystrokes:
            out.append({**base, "eventid": KEYSTROKE, "timestamp": format_timestamp(k.timestamp), "key": sample[k.char_class]})
    for o in rec.outbound:
        out.append(
            {
                **base,
                "eventid": DIRECT_TCPIP,
                "timestamp": format_timestamp(o.timestamp),
                "dst_ip": o.dst_host,
                "dst_port": o.dst_port,
            }
        )
    out.append({**base, "eventid": CLOSED, "timestamp": format_timestamp(rec.end)})
    return out


def dump_events(events: Iterable[Mapping]) -> list[str]:
    return [json.dumps(ev, sort_keys=True, ensure_ascii=False) for ev in events]


def sessions_to_dict(sessions: Mapping[str, SessionRecord], region: str = "") -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "region": region,
        "sessions": [sessions[k].to_dict() for k in sorted(sessions)],
    }


def sessions_from_dict(data: Mapping) -> dict[str, SessionRecord]:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise IngestError(f"unsupported session store version {data.get('schema_version')!r}")
    recs = (SessionRecord.from_dict(d) for d in data["sessions"])
    return {r.session_id: r for r in recs}


def split_by_region(sessions: Mapping[str, SessionRecord]) -> dict[str, dict[str, SessionRecord]]:
    out: dict[str, dict[str, SessionRecord]] = defaultdict(dict)
    for sid, rec in sessions.items():
        out[rec.region][sid] = rec
    return dict(out)


def ingest_files(
    paths: Sequence[str | Path], strictness: str = "lenient", region_label: str | None = None
) -> tuple[dict[str, SessionRecord], ParseReport, AssemblyReport]:
    events: list[RawEvent] = []
    report = ParseReport()
    for path in paths:
        evs, rep = read_log_file(path, strictness, region_label)
        events.extend(evs)
        report.merge(rep)
    sessions, assembly = assemble_sessions(events)
    return sessions, report, assembly
