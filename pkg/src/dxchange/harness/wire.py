"""Byte-stream transport for running one party per process.

Frame layout (all integers big-endian)::

    b"DX" | version (1 B) | sender (1 B) | kind (1 B) | bitlen (4 B) | payload

The payload holds ``ceil(bitlen / 8)`` bytes with the value right-aligned
(unused high bits zero).  Protocol kinds reuse :class:`dxchange.session.Kind`;
the transport adds HANDSHAKE, ABORT and REVEAL frames carrying UTF-8 JSON.
Transport frames never enter the transcript, so bit counts exclude framing.

Session flow over one connection, per trial:

1. The listener (party 1, holds ``x``) sends HANDSHAKE with the session
   parameters and the public seed; the connector echoes it verbatim or
   answers ABORT and both sides raise :class:`HandshakeMismatch`.
2. Protocol frames flow turn by turn, driven by the local party generator.
   A sender that would exceed the budget sends ABORT instead.
3. Each side sends REVEAL (its observation and its party result) so that
   both can assemble the same :class:`ExchangeOutcome` as simulate mode.
"""

from __future__ import annotations

import json
import socket
import struct
from enum import IntEnum

import numpy as np

from ..errors import ConnectionLost, HandshakeMismatch, WireFormatError
from ..session import (
    Endpoint,
    ErrorKind,
    Kind,
    Message,
    PartyRandomness,
    PartyResult,
    Transcript,
    assemble_outcome,
)

MAGIC = b"DX"
VERSION = 1
_HDR = struct.Struct(">2sBBBI")


class TransportKind(IntEnum):
    HANDSHAKE = 0x80
    ABORT = 0x81
    REVEAL = 0x82


def encode_frame(sender: int, kind: int, nbits: int, value: int, version: int = VERSION) -> bytes:
    if value < 0 or value >> nbits:
        raise WireFormatError(f"value does not fit in {nbits} bits")
    return _HDR.pack(MAGIC, version, sender, int(kind), nbits) + value.to_bytes((nbits + 7) // 8, "big")


def encode_message(msg: Message) -> bytes:
    return encode_frame(msg.sender, msg.kind, msg.nbits, msg.value)


def encode_json(sender: int, kind: TransportKind, obj) -> bytes:
    data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return encode_frame(sender, kind, 8 * len(data), int.from_bytes(data, "big"))


def decode_header(header: bytes):
    """Validate a 9-byte header; returns ``(sender, kind, nbits)``."""
    magic, version, sender, kind, nbits = _HDR.unpack(header)
    if magic != MAGIC:
        raise WireFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise WireFormatError(f"unsupported wire version {version}")
    if sender not in (1, 2):
        raise WireFormatError(f"bad sender {sender}")
    if kind not in set(Kind) | set(TransportKind):
        raise WireFormatError(f"unknown frame kind {kind}")
    return sender, kind, nbits


def decode_frame(data: bytes):
    """Decode one complete frame; returns a :class:`Message` or ``(TransportKind, sender, obj)``."""
    sender, kind, nbits = decode_header(data[:_HDR.size])
    body = data[_HDR.size:]
    if len(body) != (nbits + 7) // 8:
        raise WireFormatError("payload length does not match bit length")
    return _build(sender, kind, nbits, body)


def _build(sender, kind, nbits, body):
    value = int.from_bytes(body, "big")
    if kind in set(TransportKind):
        try:
            obj = json.loads(body.decode()) if body else None
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise WireFormatError("transport frame is not JSON") from None
        return TransportKind(kind), sender, obj
    try:
        return Message(sender, Kind(kind), nbits, value)
    except ValueError as exc:
        raise WireFormatError(str(exc)) from None


class FrameStream:
    """Frame reader/writer over a connected socket."""

    def __init__(self, sock: socket.socket, timeout: float | None = 30.0):
        self.sock = sock
        if timeout is not None:
            sock.settimeout(timeout)

    def send(self, frame: bytes):
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise ConnectionLost(f"send failed: {exc}") from None

    def _read(self, k: int) -> bytes:
        buf = bytearray()
        while len(buf) < k:
            try:
                chunk = self.sock.recv(k - len(buf))
            except OSError as exc:
                raise ConnectionLost(f"receive failed: {exc}") from None
            if not chunk:
                raise ConnectionLost("peer closed the connection")
            buf += chunk
        return bytes(buf)

    def recv(self):
        sender, kind, nbits = decode_header(self._read(_HDR.size))
        return _build(sender, kind, nbits, self._read((nbits + 7) // 8))

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


def _is_transport(frame, kind=None) -> bool:
    return isinstance(frame, tuple) and (kind is None or frame[0] == kind)


# --------------------------------------------------------------------------
# handshake


def listener_handshake(stream: FrameStream, fields: dict):
    stream.send(encode_json(1, TransportKind.HANDSHAKE, fields))
    reply = stream.recv()
    if _is_transport(reply, TransportKind.ABORT):
        raise HandshakeMismatch(f"peer rejected handshake: {reply[2]}")
    if not _is_transport(reply, TransportKind.HANDSHAKE) or reply[2] != fields:
        raise HandshakeMismatch("handshake echo differs")


def connector_handshake(stream: FrameStream, fields: dict) -> dict:
    """Check the listener's parameters against ``fields`` (public seed excluded)."""
    frame = stream.recv()
    if _is_transport(frame, TransportKind.ABORT):
        raise HandshakeMismatch(f"peer aborted: {frame[2]}")
    if not _is_transport(frame, TransportKind.HANDSHAKE):
        raise WireFormatError("expected a handshake frame")
    theirs = frame[2]
    keys = (set(theirs) | set(fields)) - {"public_seed"}
    diff = sorted(k for k in keys if theirs.get(k) != fields.get(k))
    if diff or "public_seed" not in theirs:
        stream.send(encode_json(2, TransportKind.ABORT, {"reason": "handshake", "fields": diff}))
        raise HandshakeMismatch(f"handshake mismatch in {diff}")
    stream.send(encode_json(2, TransportKind.HANDSHAKE, theirs))
    return theirs


# --------------------------------------------------------------------------
# one party over the stream


def _result_json(res: PartyResult | None):
    if res is None:
        return {"finished": False}
    est = None if res.estimate is None else [int(v) for v in np.asarray(res.estimate)]
    return {"finished": True, "estimate": est, "error_kind": res.error_kind.value, "stop_round": res.stop_round}


def _result_from_json(obj) -> PartyResult | None:
    if not obj.get("finished"):
        return None
    est = obj.get("estimate")
    return PartyResult(None if est is None else np.array(est, dtype=np.int64),
                       ErrorKind(obj["error_kind"]), obj.get("stop_round"))


def run_party(stream: FrameStream, role: int, protocol, observation, randomness: PartyRandomness, budget=None):
    """Run the local party of ``protocol`` against the peer on ``stream``.

    Returns ``(ExchangeOutcome, Transcript)``, identical to what
    :func:`dxchange.session.run_session` yields for the same inputs.
    """
    gen = protocol.party1(observation, randomness) if role == 1 else protocol.party2(observation, randomness)
    ep = Endpoint(gen)
    transcript = Transcript()
    budget_hit = False
    remote = None
    while not ep.done:
        msg = ep.outgoing
        if msg is not None:
            if budget is not None and transcript.total_bits + msg.nbits > budget:
                stream.send(encode_json(role, TransportKind.ABORT, {"reason": ErrorKind.BUDGET_EXCEEDED.value}))
                budget_hit = True
                break
            stream.send(encode_message(msg))
            transcript.append(msg)
            ep.sent()
            continue
        frame = stream.recv()
        if isinstance(frame, Message):
            transcript.append(frame)
            ep.deliver(frame)
        elif frame[0] == TransportKind.ABORT:
            budget_hit = True
            break
        elif frame[0] == TransportKind.REVEAL:
            remote = frame[2]
            break
        else:
            raise WireFormatError("unexpected handshake frame during the session")
    local = ep.result if ep.done else None
    if not ep.done:
        ep.close()
    stream.send(encode_json(role, TransportKind.REVEAL,
                            {"observation": [int(v) for v in observation], **_result_json(local)}))
    while remote is None:
        frame = stream.recv()
        if isinstance(frame, Message):
            transcript.append(frame)
        elif frame[0] == TransportKind.ABORT:
            budget_hit = True
        elif frame[0] == TransportKind.REVEAL:
            remote = frame[2]
        else:
            raise WireFormatError("unexpected handshake frame during the session")
    other = np.array(remote["observation"], dtype=np.int64)
    r_remote = _result_from_json(remote)
    if role == 1:
        x, y, r1, r2 = observation, other, local, r_remote
    else:
        x, y, r1, r2 = other, observation, r_remote, local
    return assemble_outcome(protocol, x, y, transcript, r1, r2, budget_hit), transcript


def listen(host: str, port: int) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    return srv


def connect(host: str, port: int, timeout: float = 30.0) -> socket.socket:
    try:
        return socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ConnectionLost(f"cannot connect to {host}:{port}: {exc}") from None
