"""Synthetic Cowrie campaigns with known operators.

Every IP of an operator probes on the operator's period (with bounded,
non-accumulating jitter), works through the operator's credential list a few
attempts per session until the accepting credential, then logs straight in on
later visits, runs the operator's script and makes its outbound requests.

Credential-sharing operators split their IPs into scanners, which discover
the credential by guessing, and sharers, which first connect within
``active_ttl`` of the discovery and succeed on their first attempt.
"""

from __future__ import annotations

import gzip
import hashlib
import io
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .algorithms import Partition, sort_items
from .features import load_common_credentials
from .ingest import (
    CLIENT_KEX,
    CLOSED,
    COMMAND,
    CONNECT,
    DIRECT_TCPIP,
    KEYSTROKE,
    LOGIN_FAILED,
    LOGIN_SUCCESS,
    dump_events,
    format_timestamp,
    parse_timestamp,
)

logger = logging.getLogger(__name__)

EPOCH_US = parse_timestamp("2021-03-01T00:00:00Z")
US = 1_000_000

# Two client stacks dominate real traffic; everything else is rare.
COMMON_HASSH = (
    hashlib.md5(b"libssh2-1.8").hexdigest(),
    hashlib.md5(b"go-x-crypto-ssh").hexdigest(),
)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSpec:
    operator_id: str
    n_ips: int
    credential_list: tuple[tuple[str, str], ...]
    scan_period: float  # seconds
    jitter: float = 0.05
    script: tuple[str, ...] = ()
    outbound_targets: tuple[tuple[str, int], ...] = ()
    share_credentials: bool = False
    human_fraction: float = 0.0
    active_window: tuple[float, float] = (0.0, 3 * 86400.0)  # seconds after the epoch
    creds_per_session: int = 3
    phase_spread: float = 1800.0  # seconds; spread of IP start offsets
    credential_sample: float = 1.0  # share of the guess list each IP keeps
    ips: tuple[str, ...] = ()  # optional fixed addresses

    def __post_init__(self):
        if self.n_ips < 1:
            raise SynthError(f"{self.operator_id}: n_ips must be >= 1")
        if not 0 <= self.jitter < 1:
            raise SynthError(f"{self.operator_id}: jitter must lie in [0, 1)")
        if self.scan_period <= 0:
            raise SynthError(f"{self.operator_id}: scan_period must be > 0")
        if not 0 < self.credential_sample <= 1:
            raise SynthError(f"{self.operator_id}: credential_sample must lie in (0, 1]")
        if not 0 <= self.human_fraction <= 1:
            raise SynthError(f"{self.operator_id}: human_fraction must lie in [0, 1]")
        if not self.credential_list:
            raise SynthError(f"{self.operator_id}: empty credential list")
        if self.active_window[1] <= self.active_window[0]:
            raise SynthError(f"{self.operator_id}: empty active window")
        if self.ips and len(self.ips) != self.n_ips:
            raise SynthError(f"{self.operator_id}: {len(self.ips)} fixed IPs for n_ips={self.n_ips}")

    @property
    def accepted(self) -> tuple[str, str]:
        return self.credential_list[-1]


@dataclass(frozen=True)
class NoiseSpec:
    churn_rate: float = 0.0
    churn_period: float = 86400.0  # seconds between IP replacements
    nat_overlap: int = 0
    background_ips: int = 0
    rng_seed: int = 0
    active_ttl: float = 3600.0  # seconds a shared credential stays in use
    tty_fraction: float = 0.05  # scripted bot sessions that still leave TTY timing

    def __post_init__(self):
        for name in ("churn_rate", "tty_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise SynthError(f"{name} must lie in [0, 1]")
        if self.nat_overlap < 0 or self.background_ips < 0:
            raise SynthError("counts must be >= 0")
        if self.churn_period <= 0 or self.active_ttl <= 0:
            raise SynthError("periods must be > 0")


@dataclass
class Campaign:
    lines: list[str]
    ground_truth: Partition
    operators: dict[str, list[str]]
    nat_ips: dict[str, list[str]]
    churned: dict[str, list[str]]
    background_ips: list[str]
    region: str
    seed: int

    def ground_truth_dict(self, scenario: str = "") -> dict:
        return {
            "schema_version": 1,
            "scenario": scenario,
            "seed": self.seed,
            "region": self.region,
            "operators": {k: sort_items(v) for k, v in self.operators.items()},
            "nat_ips": self.nat_ips,
            "churned": {k: sort_items(v) for k, v in self.churned.items()},
            "background_ips": sort_items(self.background_ips),
            "partition": self.ground_truth.to_dict(),
        }


class _Emitter:
    """Collects events for one campaign and hands out session ids."""

    def __init__(self, region: str, seed: int):
        self.region = region
        self.seed = seed
        self.events: list[tuple[int, str, int, dict]] = []
        self.n_sessions = 0

    def new_session(self) -> str:
        self.n_sessions += 1
        return hashlib.md5(f"{self.seed}:{self.n_sessions}".encode()).hexdigest()[:12]

    def emit(self, sid: str, ip: str, t_us: int, event_id: str, **fields) -> None:
        ev = {"eventid": event_id, "session": sid, "src_ip": ip, "sensor": self.region}
        ev["timestamp"] = format_timestamp(t_us)
        ev.update(fields)
        self.events.append((t_us, sid, len(self.events), ev))

    def lines(self) -> list[str]:
        self.events.sort(key=lambda e: (e[0], e[1], e[2]))
        return dump_events(e[3] for e in self.events)


class _IpPool:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.used: set[str] = set()

    def take(self) -> str:
        while True:
            a = int(self.rng.integers(1, 224))
            if a in (10, 127, 172, 192, 100):
                continue
            b, c, d = (int(x) for x in self.rng.integers(0, 256, 3))
            ip = f"{a}.{b}.{c}.{max(d, 1)}"
            if ip not in self.used:
                self.used.add(ip)
                return ip

    def reserve(self, ip: str) -> None:
        self.used.add(ip)


@dataclass
class _IpPlan:
    ip: str
    operator: str
    start: float  # seconds
    end: float
    phase: float
    role: str = "scanner"  # scanner | sharer
    first_at: float | None = None  # sharers: fixed first visit
    creds: tuple[tuple[str, str], ...] = ()


def _slots(spec: OperatorSpec, plan: _IpPlan, rng: np.random.Generator) -> list[float]:
    """Probe times: k-th slot at phase + k*period, displaced by +/- jitter/2 periods."""
    p = spec.scan_period
    origin = plan.first_at if plan.first_at is not None else spec.active_window[0] + plan.phase
    k_lo = max(0, int(np.ceil((plan.start - origin) / p)))
    k_hi = int(np.floor((plan.end - origin) / p))
    out = []
    for k in range(k_lo, k_hi + 1):
        jit = 0.0 if (k == 0 and plan.first_at is not None) else rng.uniform(-0.5, 0.5) * spec.jitter * p
        t = origin + k * p + jit
        if plan.start <= t < plan.end:
            out.append(t)
    return out


def _type_keys(em, sid, ip, t, text, human, rng) -> float:
    """Emit per-key TTY events for ``text`` starting at ``t``; return the end time."""
    for ch in text + "\r":
        if human:
            if ch != "\r" and rng.random() < 0.04:
                t += rng.uniform(0.12, 0.5)
                em.emit(sid, ip, int(t * US) + EPOCH_US, KEYSTROKE, key="x")
                t += rng.uniform(0.12, 0.5)
                em.emit(sid, ip, int(t * US) + EPOCH_US, KEYSTROKE, key="\x7f")
            t += rng.uniform(0.11, 0.6)
        else:
            t += rng.uniform(0.001, 0.01)
        em.emit(sid, ip, int(t * US) + EPOCH_US, KEYSTROKE, key=ch)
    return t


def _run_session(em, spec, ip, t, creds, known, hassh, noise, rng) -> tuple[bool, float | None]:
    """One connection; returns (credential known afterwards, success time)."""
    sid = em.new_session()
    us = lambda s: EPOCH_US + int(round(s * US))  # noqa: E731
    em.emit(sid, ip, us(t), CONNECT, protocol="ssh", dst_port=22)
    t += rng.uniform(0.05, 0.3)
    em.emit(sid, ip, us(t), CLIENT_KEX, hassh=hassh)
    success_at = None
    if known:
        attempts = [spec.accepted]
    else:
        attempts = creds
    for user, password in attempts:
        t += rng.uniform(0.3, 1.5)
        if (user, password) == spec.accepted:
            em.emit(sid, ip, us(t), LOGIN_SUCCESS, username=user, password=password)
            success_at = t
            break
        em.emit(sid, ip, us(t), LOGIN_FAILED, username=user, password=password)
    if success_at is not None:
        human = rng.random() < spec.human_fraction
        tty = human or rng.random() < noise.tty_fraction
        for cmd in spec.script:
            # a script pipes its next line at once; only a person pauses to read
            t += rng.uniform(0.2, 1.0) if human or not tty else rng.uniform(0.002, 0.02)
            if tty:
                t = _type_keys(em, sid, ip, t, cmd, human, rng) + 0.001
            em.emit(sid, ip, us(t), COMMAND, input=cmd)
        for host, port in spec.outbound_targets:
            t += rng.uniform(0.1, 0.5)
            em.emit(sid, ip, us(t), DIRECT_TCPIP, dst_ip=host, dst_port=port)
    t += rng.uniform(0.2, 1.0)
    em.emit(sid, ip, us(t), CLOSED, duration=0)
    return success_at is not None, success_at


def _guess_list(spec: OperatorSpec, rng: np.random.Generator) -> tuple[tuple[str, str], ...]:
    """Per-IP subsample of the guesses (order kept); the accepted one always ends it."""
    guesses = spec.credential_list[:-1]
    if spec.credential_sample < 1.0 and guesses:
        keep = rng.random(len(guesses)) < spec.credential_sample
        guesses = tuple(c for c, k in zip(guesses, keep) if k)
    return tuple(guesses) + (spec.accepted,)


def _simulate_ip(em, spec, plan, hassh, noise, rng) -> float | None:
    """All sessions of one IP for one operator; returns first success time."""
    known = plan.role == "sharer"
    guesses = plan.creds or spec.credential_list
    chunk = spec.creds_per_session if spec.creds_per_session > 0 else len(guesses)
    next_idx = 0
    first_success = None
    for t in _slots(spec, plan, rng):
        creds = guesses[next_idx : next_idx + chunk]
        ok, when = _run_session(em, spec, plan.ip, t, creds, known, hassh, noise, rng)
        if ok:
            known = True
            if first_success is None:
                first_success = when
        else:
            next_idx = (next_idx + chunk) % len(guesses)
    return first_success


def generate_campaign(
    specs: Sequence[OperatorSpec], noise: NoiseSpec = NoiseSpec(), region: str = "synth"
) -> Campaign:
    """Emit Cowrie JSON lines plus the ground-truth operator partition."""
    ids = [s.operator_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SynthError("operator ids must be unique")
    rng = np.random.default_rng(noise.rng_seed)
    pool = _IpPool(rng)
    fixed: dict[str, str] = {}
    for s in specs:
        for ip in s.ips:
            if ip in fixed:
                raise SynthError(f"{ip} assigned to both {fixed[ip]} and {s.operator_id}")
            fixed[ip] = s.operator_id
            pool.reserve(ip)

    plans: dict[str, list[_IpPlan]] = {}
    churned: dict[str, list[str]] = {}
    for s in specs:
        start, end = s.active_window
        ips = list(s.ips) or [pool.take() for _ in range(s.n_ips)]
        current = [
            _IpPlan(ip, s.operator_id, start, end, float(rng.uniform(0, min(s.phase_spread, s.scan_period))))
            for ip in ips
        ]
        done: list[_IpPlan] = []
        churned[s.operator_id] = []
        n_replace = int(round(noise.churn_rate * s.n_ips))
        boundary = start + noise.churn_period
        while n_replace and boundary < end:
            victims = sorted(rng.choice(len(current), size=n_replace, replace=False).tolist())
            for v in victims:
                old = current[v]
                old.end = boundary
                done.append(old)
                churned[s.operator_id].append(old.ip)
                current[v] = _IpPlan(
                    pool.take(), s.operator_id, boundary, end,
                    float(rng.uniform(0, min(s.phase_spread, s.scan_period))),
                )
            boundary += noise.churn_period
        plans[s.operator_id] = done + current

    nat_ips: dict[str, list[str]] = {}
    if noise.nat_overlap:
        if len(specs) < 2:
            raise SynthError("nat_overlap needs at least two operators")
        for i in range(noise.nat_overlap):
            a = specs[i % len(specs)].operator_id
            b = specs[(i + 1) % len(specs)].operator_id
            donors = [p for p in plans[a] if p.ip not in nat_ips]
            takers = [p for p in plans[b] if p.ip not in nat_ips]
            if not donors or not takers:
                raise SynthError("nat_overlap larger than the operators allow")
            donor = donors[int(rng.integers(len(donors)))]
            taker = takers[int(rng.integers(len(takers)))]
            taker.ip = donor.ip
            nat_ips[donor.ip] = [a, b]

    for s in specs:
        for plan in plans[s.operator_id]:
            plan.creds = _guess_list(s, rng)

    em = _Emitter(region, noise.rng_seed)
    by_id = {s.operator_id: s for s in specs}
    for s in specs:
        hassh = COMMON_HASSH[int(rng.integers(2))] if rng.random() < 0.85 else hashlib.md5(
            s.operator_id.encode()
        ).hexdigest()
        group = plans[s.operator_id]
        if s.share_credentials and len(group) > 1:
            n_scan = max(1, len(group) // 3)
            scanners, sharers = group[:n_scan], group[n_scan:]
        else:
            scanners, sharers = group, []
        discovered = []
        for plan in scanners:
            t = _simulate_ip(em, s, plan, hassh, noise, rng)
            if t is not None:
                discovered.append(t)
        if sharers:
            if not discovered:
                raise SynthError(f"{s.operator_id}: no scanner found the credential; widen the window")
            t_disc = min(discovered)
            for plan in sharers:
                plan.role = "sharer"
                plan.first_at = t_disc + float(rng.uniform(0.05, 1.0)) * noise.active_ttl
                plan.start = max(plan.start, plan.first_at)
                _simulate_ip(em, by_id[s.operator_id], plan, hassh, noise, rng)

    common = sorted(load_common_credentials())
    horizon = max(s.active_window[1] for s in specs) if specs else 86400.0
    background = []
    bg_spec = OperatorSpec("background", 1, (("", ""),), 1.0)
    for _ in range(noise.background_ips):
        ip = pool.take()
        background.append(ip)
        k = int(rng.integers(1, 5))
        picks = [common[i] for i in sorted(rng.choice(len(common), size=k, replace=False).tolist())]
        creds = tuple(c for c in picks if c != bg_spec.accepted)
        _run_session(em, bg_spec, ip, float(rng.uniform(0, horizon)), creds, False, COMMON_HASSH[0], noise, rng)

    operators = {sid: sort_items({p.ip for p in plans[sid]}) for sid in ids}
    owner: dict[str, int] = {}
    for k, sid in enumerate(ids):
        for ip in operators[sid]:
            owner.setdefault(ip, k)  # NAT IPs keep their first operator
    universe = sort_items(owner)
    truth = Partition.from_labels(universe, [owner[ip] for ip in universe], "ground_truth")
    return Campaign(em.lines(), truth, operators, nat_ips, churned, background, region, noise.rng_seed)


# --- files ------------------------------------------------------------------


def write_campaign(campaign: Campaign, out_dir: str | Path, scenario: str = "") -> dict[str, Path]:
    """Write ``<region>.jsonl.gz`` (mtime 0, so byte-stable) and ground_truth.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{campaign.region}.jsonl.gz"
    buf = io.BytesIO()
    with gzip.GzipFile(filename="", mode="wb", fileobj=buf, mtime=0) as gz:
        for line in campaign.lines:
            gz.write(line.encode("utf-8") + b"\n")
    log_path.write_bytes(buf.getvalue())
    truth_path = out / "ground_truth.json"
    truth_path.write_text(json.dumps(campaign.ground_truth_dict(scenario), indent=1, sort_keys=True) + "\n")
    return {"log": log_path, "ground_truth": truth_path}


def read_ground_truth(path: str | Path) -> tuple[Partition, dict]:
    data = json.loads(Path(path).read_text())
    return Partition.from_dict(data["partition"]), data


# --- scenarios --------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    specs: tuple[OperatorSpec, ...]
    noise: NoiseSpec
    region: str = "synth"
    description: str = ""

    def generate(self, seed: int | None = None) -> Campaign:
        noise = self.noise if seed is None else replace(self.noise, rng_seed=seed)
        return generate_campaign(self.specs, noise, self.region)


def _credentials(entry: Mapping, rng: np.random.Generator, common: list[tuple[str, str]]) -> tuple:
    if "credential_list" in entry:
        return tuple((u, p) for u, p in entry["credential_list"])
    gen = entry.get("credentials", {})
    creds: list[tuple[str, str]] = []
    start, count = gen.get("common", [0, 0])
    creds.extend(common[start : start + count])
    alphabet = np.array(list("abcdefghijklmnopqrstuvwxyz0123456789"))
    for _ in range(int(gen.get("random", 0))):
        user = gen.get("user") or "".join(rng.choice(alphabet, 6))
        creds.append((user, "".join(rng.choice(alphabet, 10))))
    accept = gen.get("accept")
    if accept:
        creds.append(tuple(accept))
    if not creds:
        raise SynthError(f"operator {entry.get('operator_id')} has no credentials")
    return tuple(creds)


def scenario_from_dict(data: Mapping) -> Scenario:
    """Build a scenario from its JSON form; credential generators use the scenario seed."""
    noise = NoiseSpec(**data.get("noise", {}))
    rng = np.random.default_rng([noise.rng_seed, 7919])
    common = _ordered_common()
    specs = []
    for entry in data["operators"]:
        kw = {k: v for k, v in entry.items() if k not in ("credentials", "credential_list")}
        kw["credential_list"] = _credentials(entry, rng, common)
        kw["script"] = tuple(kw.get("script", ()))
        kw["outbound_targets"] = tuple((h, int(p)) for h, p in kw.get("outbound_targets", ()))
        if "active_window" in kw:
            kw["active_window"] = tuple(float(x) for x in kw["active_window"])
        kw["ips"] = tuple(kw.get("ips", ()))
        specs.append(OperatorSpec(**kw))
    return Scenario(data["name"], tuple(specs), noise, data.get("region", "synth"), data.get("description", ""))


def _ordered_common() -> list[tuple[str, str]]:
    """Common credentials in file order (the order matters for scenario slices)."""
    text = resources.files("honeycluster.data").joinpath("common_credentials.txt").read_text()
    out, seen = [], set()
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        user, _, password = line.partition(":")
        if (user, password) not in seen:
            seen.add((user, password))
            out.append((user, password))
    return out


def load_scenario(name_or_path: str | Path) -> Scenario:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return scenario_from_dict(json.loads(path.read_text()))
    lib = scenario_library()
    if str(name_or_path) not in lib:
        raise SynthError(f"unknown scenario {name_or_path!r}; known: {sorted(lib)}")
    return lib[str(name_or_path)]


def scenario_library() -> dict[str, Scenario]:
    out = {}
    folder = resources.files("honeycluster.data").joinpath("scenarios")
    for item in sorted(folder.iterdir(), key=lambda p: p.name):
        if item.name.endswith(".json"):
            sc = scenario_from_dict(json.loads(item.read_text()))
            out[sc.name] = sc
    return out
