import gzip
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from honeycluster.ingest import (
    CLIENT_FINGERPRINT,
    CLIENT_KEX,
    CLOSED,
    COMMAND,
    CONNECT,
    DIRECT_TCPIP,
    KEYSTROKE,
    LOGIN_FAILED,
    LOGIN_SUCCESS,
    CommandEvent,
    Keystroke,
    LoginAttempt,
    MalformedLine,
    OutboundRequest,
    SessionRecord,
    assemble_sessions,
    dump_events,
    format_timestamp,
    ingest_files,
    key_class,
    parse_log_stream,
    parse_timestamp,
    read_log_file,
    session_to_events,
    sessions_from_dict,
    sessions_to_dict,
    split_by_region,
)

T0 = parse_timestamp("2021-03-01T00:00:00Z")


def ev(eventid, t, session="s1", ip="1.2.3.4", **kw):
    return json.dumps({"eventid": eventid, "session": session, "src_ip": ip, "timestamp": format_timestamp(T0 + t), **kw})


def sessions_of(lines):
    events, _ = parse_log_stream(lines, "strict")
    return assemble_sessions(events)[0]


# --- timestamps -------------------------------------------------------------


def test_parse_timestamp_variants():
    assert parse_timestamp("1970-01-01T00:00:01Z") == 1_000_000
    assert parse_timestamp("1970-01-01T00:00:01.5Z") == 1_500_000
    assert parse_timestamp("1970-01-01T01:00:00+01:00") == 0
    # sub-microsecond digits are truncated, not rounded
    assert parse_timestamp("1970-01-01T00:00:00.0000019Z") == 1
    with pytest.raises(ValueError):
        parse_timestamp("yesterday")


@given(st.integers(0, 4_000_000_000_000_000))
def test_timestamp_roundtrip(us):
    assert parse_timestamp(format_timestamp(us)) == us


# --- parsing ----------------------------------------------------------------


BAD_LINES = [
    "{not json",
    "[1, 2]",
    json.dumps({"eventid": CONNECT, "session": "s", "timestamp": "2021-03-01T00:00:00Z"}),
    json.dumps({"eventid": CONNECT, "session": "s", "src_ip": "999.1.1.1", "timestamp": "2021-03-01T00:00:00Z"}),
    json.dumps({"eventid": CONNECT, "session": "s", "src_ip": "1.1.1.1", "timestamp": "noon"}),
]


@pytest.mark.parametrize("bad", BAD_LINES)
def test_lenient_skips_and_strict_raises(bad):
    lines = [ev(CONNECT, 0), bad, ev(CLOSED, 5)]
    events, report = parse_log_stream(lines, "lenient")
    assert len(events) == 2
    assert report.lines_skipped == 1 and report.malformed_lines == [2]
    with pytest.raises(MalformedLine) as info:
        parse_log_stream(lines, "strict")
    assert info.value.line_no == 2


def test_unknown_events_are_counted_not_fatal():
    lines = [ev(CONNECT, 0), ev("cowrie.session.file_download", 1, url="x"), ev(CLOSED, 2)]
    events, report = parse_log_stream(lines, "strict")
    assert report.unknown_events == 1
    sessions, asm = assemble_sessions(events)
    assert asm.events_unknown == 1
    assert len(sessions) == 1


def test_non_utf8_line():
    lines = [ev(CONNECT, 0).encode(), b"\xff\xfe{}", ev(CLOSED, 1).encode()]
    events, report = parse_log_stream(lines, "lenient")
    assert len(events) == 2 and report.malformed_lines == [2]


def test_gzip_and_plain_files_read_the_same(tmp_path):
    lines = [ev(CONNECT, 0), ev(LOGIN_FAILED, 1, username="root", password="x"), ev(CLOSED, 2)]
    plain = tmp_path / "a.json"
    plain.write_text("\n".join(lines) + "\n")
    gz = tmp_path / "b.json.gz"
    gz.write_bytes(gzip.compress(("\n".join(lines) + "\n").encode()))
    e1, _ = read_log_file(plain, "strict")
    e2, _ = read_log_file(gz, "strict")
    assert e1 == e2


def test_region_from_sensor_or_label(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("\n".join([ev(CONNECT, 0, sensor="eu"), ev(CONNECT, 0, session="s2"), ev(CLOSED, 1, session="s2")]))
    sessions, _, _ = ingest_files([path], "strict", "fallback")
    assert {k: v.region for k, v in sessions.items()} == {"s1": "eu", "s2": "fallback"}
    assert sorted(split_by_region(sessions)) == ["eu", "fallback"]


# --- assembly ---------------------------------------------------------------


def test_session_assembly_collects_everything():
    lines = [
        ev(CLOSED, 90),  # out of order on purpose
        ev(CONNECT, 0),
        ev(CLIENT_KEX, 1, hassh="ABCDEF0123456789abcdef0123456789"),
        ev(LOGIN_FAILED, 2, username="root", password="123456"),
        ev(COMMAND, 3, input="ls"),  # before login: dropped
        ev(LOGIN_SUCCESS, 4, username="root", password="admin"),
        ev(COMMAND, 5, input="uname -a"),
        ev(COMMAND, 6, input="   "),
        ev(DIRECT_TCPIP, 7, dst_ip="example.com", dst_port=80),
        ev(DIRECT_TCPIP, 8, dst_ip="example.com", dst_port="nope"),
    ]
    events, _ = parse_log_stream(lines, "strict")
    sessions, report = assemble_sessions(events)
    rec = sessions["s1"]
    assert rec.start == T0 and rec.end == T0 + 90
    assert [(l.username, l.password, l.success) for l in rec.logins] == [("root", "123456", False), ("root", "admin", True)]
    assert [c.raw for c in rec.commands] == ["uname -a"]
    assert rec.outbound == (OutboundRequest("example.com", 80, T0 + 7),)
    assert rec.hassh == "abcdef0123456789abcdef0123456789"
    assert report.events_dropped == {"command_before_login": 1, "empty_command": 1, "bad_outbound": 1}
    assert rec.keystroke_source == "command"


def test_publickey_attempts():
    lines = [
        ev(CONNECT, 0),
        ev(CLIENT_FINGERPRINT, 1, username="root", fingerprint="aa:bb"),
        ev(LOGIN_SUCCESS, 2, username="root", password="", fingerprint="aa:bb"),
        ev(CLOSED, 3),
    ]
    rec = sessions_of(lines)["s1"]
    assert [l.method for l in rec.logins] == ["publickey", "publickey"]
    assert rec.logins[1].success


def test_conflicting_session_tokens_are_split():
    lines = [ev(CONNECT, 0, ip="1.1.1.1"), ev(CONNECT, 1, ip="2.2.2.2"), ev(CLOSED, 2, ip="1.1.1.1")]
    events, _ = parse_log_stream(lines, "strict")
    sessions, report = assemble_sessions(events)
    assert sorted(sessions) == ["s1/1.1.1.1", "s1/2.2.2.2"]
    assert report.conflicting_sessions == ["s1"]


def test_tty_keystrokes_are_classified():
    lines = [ev(CONNECT, 0), ev(LOGIN_SUCCESS, 1, username="a", password="b")]
    lines += [ev(KEYSTROKE, 2 + i, key=k) for i, k in enumerate(["l", "\x7f", "\x03", "s"])]
    lines += [ev(COMMAND, 9, input="ls"), ev(CLOSED, 10)]
    rec = sessions_of(lines)["s1"]
    assert rec.keystroke_source == "tty"
    assert [k.char_class for k in rec.keystrokes] == ["printable", "erase", "control", "printable"]


@pytest.mark.parametrize("key,cls", [("a", "printable"), ("\x08", "erase"), ("\x7f", "erase"), ("\r", "control"), ("", "control")])
def test_key_class(key, cls):
    assert key_class(key) == cls


# --- round trip -------------------------------------------------------------


@st.composite
def session_records(draw):
    start = T0 + draw(st.integers(0, 10**9))
    offs = sorted(draw(st.lists(st.integers(1, 10**7), min_size=0, max_size=12, unique=True)))
    n_fail = draw(st.integers(0, min(4, len(offs))))
    text = st.text(st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=8).filter(str.strip)
    logins = [LoginAttempt(draw(text), draw(text), False, start + o) for o in offs[:n_fail]]
    rest = offs[n_fail:]
    commands, keys = (), ()
    if rest and draw(st.booleans()):
        logins.append(LoginAttempt(draw(text), draw(text), True, start + rest[0], draw(st.sampled_from(["password", "publickey"]))))
        commands = tuple(CommandEvent(draw(text), start + o) for o in rest[1:])
        if draw(st.booleans()):
            keys = tuple(Keystroke(start + o, draw(st.sampled_from(["printable", "erase", "control"]))) for o in rest[1:])
    end = start + 10**7 + 1
    if not keys and commands:
        keys = tuple(Keystroke(c.timestamp, "erase" if "\x7f" in c.raw or "\x08" in c.raw else "printable") for c in commands)
        source = "command"
    else:
        source = "tty" if keys else "none"
    return SessionRecord(
        session_id=draw(st.from_regex(r"[0-9a-f]{12}", fullmatch=True)),
        src_ip=draw(st.ip_addresses(v=4)).exploded,
        region="r1",
        start=start,
        end=end,
        logins=tuple(logins),
        commands=commands,
        outbound=(),
        keystrokes=keys,
        hassh=None,
        keystroke_source=source,
    )


@settings(max_examples=80, deadline=None)
@given(session_records())
def test_record_event_roundtrip(rec):
    lines = dump_events(session_to_events(rec))
    events, report = parse_log_stream(lines, "strict")
    assert report.lines_skipped == 0
    sessions, _ = assemble_sessions(events)
    assert sessions == {rec.session_id: rec}


@settings(max_examples=40, deadline=None)
@given(session_records())
def test_store_roundtrip(rec):
    data = json.loads(json.dumps(sessions_to_dict({rec.session_id: rec}, "r1")))
    assert sessions_from_dict(data) == {rec.session_id: rec}
