"""Newline-delimited JSON transport between a verifier and a remote prover.

One message per line; a message is ``{"version", "session", "kind",
"payload"}`` with a per-kind payload schema and no unknown fields.  The
verifier side drives :class:`~poq.protocol.ShotSession` objects exactly
as the in-process loop does, so records match byte for byte.

Per-shot flow (verifier ``>``, prover ``<``)::

    > challenge {stage: commit, preview?}   < commit {w}
    > challenge {stage: branch, branch, r?} < response {stage: branch, value}
    > challenge {stage: basis, basis}       < response {stage: basis, value}   (factoring B)
    > verdict {status, verdict}
"""
from __future__ import annotations

import json
import logging
import socket
import threading
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable

from . import tcf
from .protocol import (
    Challenge,
    ProtocolError,
    Prover,
    ShotRecord,
    Tally,
    Verifier,
    make_prover,
)

log = logging.getLogger(__name__)

VERSION = 1
DEFAULT_TIMEOUT = 30.0
MAX_LINE = 1 << 20

# kind -> (required payload keys, optional payload keys)
SCHEMAS: dict[str, tuple[frozenset, frozenset]] = {
    "hello": (frozenset({"role"}), frozenset({"protocol", "instance_id", "mode", "shots", "prover"})),
    "instance": (frozenset({"instance"}), frozenset()),
    "commit": (frozenset({"shot", "w"}), frozenset()),
    "challenge": (frozenset({"shot", "stage"}), frozenset({"preview", "branch", "r", "basis"})),
    "response": (frozenset({"shot", "stage", "value"}), frozenset()),
    "verdict": (frozenset({"shot", "status", "verdict"}), frozenset()),
    "summary": (frozenset({"tally"}), frozenset()),
    "close": (frozenset(), frozenset({"reason"})),
    "error": (frozenset({"message"}), frozenset({"shot"})),
}
ENVELOPE = frozenset({"version", "session", "kind", "payload"})
TRAPDOOR_KEYS = frozenset({"trapdoor", "s", "e", "p", "q"})


class WireError(ValueError):
    """A line could not be decoded into a valid message."""


@dataclass(frozen=True)
class Message:
    kind: str
    payload: dict[str, Any] = field(default_factory=dict)
    session: str = ""
    version: int = VERSION

    def encode(self) -> bytes:
        validate(self)
        obj = {"version": self.version, "session": self.session, "kind": self.kind, "payload": self.payload}
        return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def _find_trapdoor_keys(obj) -> set[str]:
    found: set[str] = set()
    if isinstance(obj, dict):
        found |= TRAPDOOR_KEYS & set(obj)
        for v in obj.values():
            found |= _find_trapdoor_keys(v)
    elif isinstance(obj, list):
        for v in obj:
            found |= _find_trapdoor_keys(v)
    return found


def validate(msg: Message) -> None:
    if msg.kind not in SCHEMAS:
        raise WireError(f"unknown message kind {msg.kind!r}")
    if not isinstance(msg.payload, dict):
        raise WireError("payload must be an object")
    required, optional = SCHEMAS[msg.kind]
    keys = set(msg.payload)
    if required - keys:
        raise WireError(f"{msg.kind}: missing {sorted(required - keys)}")
    if keys - required - optional:
        raise WireError(f"{msg.kind}: unknown fields {sorted(keys - required - optional)}")
    if msg.kind == "instance":
        leaked = _find_trapdoor_keys(msg.payload)
        if leaked:
            raise WireError(f"instance message carries trapdoor fields {sorted(leaked)}")


def decode(line: bytes | str) -> Message:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError(f"not UTF-8: {exc}") from exc
    if not line.endswith("\n"):
        raise WireError("truncated line (no terminating newline)")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise WireError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict) or set(obj) != ENVELOPE:
        raise WireError("envelope must have exactly version, session, kind, payload")
    msg = Message(obj["kind"], obj["payload"], obj["session"], obj["version"])
    validate(msg)
    return msg


class Channel:
    """Line-oriented message channel over a connected stream socket."""

    def __init__(self, sock: socket.socket, session: str = "", timeout: float | None = DEFAULT_TIMEOUT):
        self.sock = sock
        self.session = session
        self.sock.settimeout(timeout)
        self._buf = b""
        self.transcript: list[str] = []

    def send(self, kind: str, **payload) -> None:
        data = Message(kind, payload, self.session).encode()
        self.transcript.append("> " + data.decode().rstrip("\n"))
        self.sock.sendall(data)

    def recv(self) -> Message:
        while b"\n" not in self._buf:
            chunk = self.sock.recv(65536)
            if not chunk:
                if self._buf:
                    raise WireError("truncated line (connection closed mid-message)")
                raise ConnectionError("peer closed the connection")
            self._buf += chunk
            if len(self._buf) > MAX_LINE:
                raise WireError("line too long")
        line, self._buf = self._buf.split(b"\n", 1)
        self.transcript.append("< " + line.decode("utf-8", "replace"))
        msg = decode(line + b"\n")
        if self.session and msg.session and msg.session != self.session:
            raise WireError(f"session id mismatch: {msg.session!r}")
        return msg

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


# -- verifier side -------------------------------------------------------------


@dataclass
class SessionResult:
    session: str
    tally: Tally
    records: list[ShotRecord]
    aborted: str | None = None


def serve_session(chan: Channel, verifier: Verifier) -> SessionResult:
    """Run one complete session over ``chan``; never raises on peer misbehaviour."""
    records: list[ShotRecord] = []
    try:
        hello = chan.recv()
        if hello.kind != "hello" or hello.payload.get("role") != "prover":
            raise ProtocolError("expected prover hello")
        if hello.version != VERSION:
            chan.send("error", message=f"version {hello.version} unsupported (want {VERSION})")
            chan.send("close", reason="version mismatch")
            return SessionResult(chan.session, Tally(), records, "version mismatch")
        chan.send(
            "hello",
            role="verifier",
            protocol=verifier.kind,
            instance_id=verifier.config.instance_id,
            mode=verifier.config.mode,
            shots=verifier.shots,
        )
        chan.send("instance", instance=verifier.public_instance())
        for shot in range(verifier.shots):
            records.append(_serve_shot(chan, verifier, shot))
    except (socket.timeout, TimeoutError):
        return _abort(chan, records, "timeout")
    except (ConnectionError, OSError) as exc:
        return SessionResult(chan.session, Tally.from_records(records), records, f"connection: {exc}")
    except (WireError, ProtocolError) as exc:
        return _abort(chan, records, str(exc))
    tally = Tally.from_records(records)
    chan.send("summary", tally=tally.to_json())
    chan.send("close", reason="done")
    return SessionResult(chan.session, tally, records)


def _abort(chan: Channel, records, reason: str) -> SessionResult:
    try:
        chan.send("error", message=reason)
        chan.send("close", reason="aborted")
    except OSError:
        pass
    return SessionResult(chan.session, Tally.from_records(records), records, reason)


def _challenge_payload(shot: int, req) -> dict[str, Any]:
    stage, body = req
    if stage == "branch":
        return {"shot": shot, "stage": "branch", **body.to_json()}
    return {"shot": shot, "stage": "basis", "basis": body}


def _serve_shot(chan: Channel, verifier: Verifier, shot: int) -> ShotRecord:
    sess = verifier.session(shot)
    preview = sess.preview()
    payload: dict[str, Any] = {"shot": shot, "stage": "commit"}
    if preview is not None:
        payload["preview"] = preview.to_json()
    chan.send("challenge", **payload)
    while not sess.done:
        msg = chan.recv()
        p = msg.payload
        if msg.kind in ("commit", "response") and p["shot"] < shot:
            continue  # stale traffic from a voided shot
        try:
            if msg.kind == "error":
                raise ProtocolError(f"prover error: {p['message']}")
            if msg.kind not in ("commit", "response") or p["shot"] != shot:
                raise ProtocolError(f"unexpected {msg.kind} in shot {shot}")
            if msg.kind == "commit":
                req = sess.on_commit(str(p["w"]))
            else:
                req = sess.on_response(str(p["stage"]), str(p["value"]))
        except ProtocolError as exc:
            sess.void(str(exc))
            if msg.kind != "error":
                chan.send("error", shot=shot, message=str(exc))
            break
        if req is not None:
            chan.send("challenge", **_challenge_payload(shot, req))
    rec = sess.record
    chan.send("verdict", shot=shot, status=rec.status, verdict=rec.verdict)
    return rec


def run_verifier_endpoint(
    make_verifier: Callable[[], Verifier],
    listener: socket.socket,
    sessions: int = 1,
    timeout: float | None = DEFAULT_TIMEOUT,
) -> list[SessionResult]:
    """Accept ``sessions`` connections and serve each in its own thread."""
    results: list[SessionResult | None] = [None] * sessions
    threads = []

    def worker(i: int, conn: socket.socket) -> None:
        chan = Channel(conn, uuid.uuid4().hex[:12], timeout)
        try:
            results[i] = serve_session(chan, make_verifier())
        finally:
            chan.close()

    for i in range(sessions):
        conn, _ = listener.accept()
        t = threading.Thread(target=worker, args=(i, conn), daemon=True)
        t.start()
        threads.append(t)
    for t in threads:
        t.join()
    return [r for r in results if r is not None]


# -- prover side ---------------------------------------------------------------


@dataclass
class ProverLog:
    transcript: list[str]
    verdicts: dict[int, tuple[str, str]] = field(default_factory=dict)
    incomplete: list[int] = field(default_factory=list)
    summary: Tally | None = None
    protocol: str | None = None
    instance_id: str | None = None
    error: str | None = None


def run_prover_endpoint(
    chan: Channel,
    prover_name: str = "honest",
    seed: int = 0,
    compiled: bool = False,
    factory: Callable[[tcf.Instance, str], Prover] | None = None,
) -> ProverLog:
    """Act as the prover for one session; the trapdoor is never requested.

    ``factory(public_instance, mode)`` overrides the named prover.
    """
    out = ProverLog(chan.transcript)
    prover: Prover | None = None
    current: int | None = None
    try:
        chan.send("hello", role="prover", prover=prover_name)
        hello = chan.recv()
        if hello.kind != "hello":
            raise ProtocolError(f"expected hello, got {hello.kind}")
        chan.session = chan.session or hello.session
        out.protocol = hello.payload.get("protocol")
        out.instance_id = hello.payload.get("instance_id")
        mode = hello.payload.get("mode", "interactive")
        while True:
            msg = chan.recv()
            p = msg.payload
            if msg.kind == "instance":
                inst, _ = tcf.instance_from_json(p["instance"])
                prover = factory(inst, mode) if factory else make_prover(prover_name, inst, seed, mode, compiled)
            elif msg.kind == "challenge":
                if prover is None:
                    raise ProtocolError("challenge before instance")
                shot = p["shot"]
                if p["stage"] == "commit":
                    current = shot
                    preview = Challenge.from_json(p["preview"]) if "preview" in p else None
                    prover.start_shot(shot, preview)
                    chan.send("commit", shot=shot, w=prover.commit())
                elif p["stage"] == "branch":
                    value = prover.answer_branch(Challenge(p["branch"], p.get("r")))
                    chan.send("response", shot=shot, stage="branch", value=value)
                else:
                    chan.send("response", shot=shot, stage="basis", value=prover.answer_basis(p["basis"]))
            elif msg.kind == "verdict":
                out.verdicts[p["shot"]] = (p["status"], p["verdict"])
                current = None
            elif msg.kind == "summary":
                out.summary = Tally.from_json(p["tally"])
            elif msg.kind == "error":
                log.warning("verifier error: %s", p["message"])
                if "shot" not in p:
                    out.error = p["message"]
            elif msg.kind == "close":
                break
    except (ConnectionError, OSError, WireError, ProtocolError) as exc:
        out.error = str(exc)
        if current is not None:
            out.incomplete.append(current)
    return out


def loopback(
    make_verifier: Callable[[], Verifier],
    prover_name: str = "honest",
    seed: int = 0,
    compiled: bool = False,
    timeout: float | None = DEFAULT_TIMEOUT,
    factory=None,
) -> tuple[SessionResult, ProverLog]:
    """Run one session over an in-process socket pair."""
    a, b = socket.socketpair()
    vchan = Channel(a, uuid.uuid4().hex[:12], timeout)
    pchan = Channel(b, "", timeout)
    box: dict[str, ProverLog] = {}

    def prover_side():
        try:
            box["log"] = run_prover_endpoint(pchan, prover_name, seed, compiled, factory)
        finally:
            pchan.close()

    t = threading.Thread(target=prover_side, daemon=True)
    t.start()
    try:
        result = serve_session(vchan, make_verifier())
    finally:
        vchan.close()
    t.join()
    return result, box["log"]


def parse_address(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)
