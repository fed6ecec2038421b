"""Transcripts, bit accounting and the two-party execution loop.

A protocol supplies two *party* generators.  A party yields a
:class:`Message` to send it, or :data:`RECV` to block until the next
message addressed to it arrives (delivered as the value of the ``yield``).
It returns a :class:`PartyResult`.  Each party only ever sees its own
observation, its own private seed and the public seed.
"""

from __future__ import annotations

import struct
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .sources import SequenceSource, sample


class Kind(IntEnum):
    HASH_BLOCK = 1
    ACK = 2
    NACK = 3
    TYPE_HEADER = 4
    INDEX_PAYLOAD = 5


PHASE2_KINDS = (Kind.TYPE_HEADER, Kind.INDEX_PAYLOAD)


@dataclass(frozen=True)
class Message:
    """A directed message; ``value`` is the payload as a big-endian ``nbits``-bit integer."""

    sender: int
    kind: Kind
    nbits: int
    value: int = 0

    def __post_init__(self):
        if self.sender not in (1, 2):
            raise ValueError("sender must be 1 or 2")
        if self.nbits < 0 or self.value < 0 or self.value >> self.nbits:
            raise ValueError(f"payload {self.value} does not fit in {self.nbits} bits")
        if self.kind in (Kind.ACK, Kind.NACK) and self.nbits != 1:
            raise ValueError("ACK/NACK carry exactly one bit")

    def payload_bytes(self) -> bytes:
        return self.value.to_bytes((self.nbits + 7) // 8, "big")

    def bitstring(self) -> str:
        return format(self.value, f"0{self.nbits}b") if self.nbits else ""


def ack(sender: int) -> Message:
    return Message(sender, Kind.ACK, 1, 1)


def nack(sender: int) -> Message:
    return Message(sender, Kind.NACK, 1, 0)


class Transcript:
    """Ordered record of the messages actually sent."""

    _HDR = struct.Struct(">BBI")

    def __init__(self, entries=()):
        self.entries = list(entries)

    def append(self, msg: Message):
        self.entries.append(msg)

    @property
    def total_bits(self) -> int:
        return sum(m.nbits for m in self.entries)

    def bits_of(self, kinds) -> int:
        return sum(m.nbits for m in self.entries if m.kind in kinds)

    def to_bytes(self) -> bytes:
        """Serialize: per entry sender (1 B), kind (1 B), bit length (4 B, BE), padded payload."""
        out = bytearray()
        for m in self.entries:
            out += self._HDR.pack(m.sender, int(m.kind), m.nbits) + m.payload_bytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        entries, pos = [], 0
        while pos < len(data):
            sender, kind, nbits = cls._HDR.unpack_from(data, pos)
            pos += cls._HDR.size
            nb = (nbits + 7) // 8
            value = int.from_bytes(data[pos:pos + nb], "big")
            pos += nb
            entries.append(Message(sender, Kind(kind), nbits, value))
        return cls(entries)

    def __eq__(self, other):
        return isinstance(other, Transcript) and self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def __repr__(self):
        return f"Transcript({len(self.entries)} entries, {self.total_bits} bits)"


class ErrorKind(str, Enum):
    NONE = "none"
    NO_CANDIDATE = "no_candidate"
    AMBIGUOUS = "ambiguous"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass
class ExchangeOutcome:
    """Per-trial result.

    ``aborted`` is set when a party declares an error or the budget is hit;
    a silent wrong decode has ``correct=False`` but ``aborted=False``.
    """

    x_hat: object
    y_hat: object
    correct: bool
    total_bits: int
    rounds_used: int
    aborted: bool
    error_kind: ErrorKind = ErrorKind.NONE
    stop_round: int | None = None
    bits_phase1: int = 0
    bits_phase2: int = 0


@dataclass(frozen=True)
class PartyRandomness:
    """What a single party may see: the public seed and its own private seed."""

    public_seed: int
    private_seed: int

    def private_rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.private_seed, 0x5052]))


@dataclass(frozen=True)
class SessionRandomness:
    """Public coins ``U`` and private coins ``U_X``, ``U_Y`` as 64-bit seeds."""

    public_seed: int
    party1_seed: int
    party2_seed: int

    @classmethod
    def derive(cls, master_seed: int, trial: int) -> "SessionRandomness":
        # distinct labels keep the three streams independent
        seeds = [int(np.random.SeedSequence([master_seed, trial, label]).generate_state(1, np.uint64)[0])
                 for label in (0, 1, 2)]
        return cls(*seeds)

    def for_party(self, k: int) -> PartyRandomness:
        return PartyRandomness(self.public_seed, self.party1_seed if k == 1 else self.party2_seed)


def source_rng(master_seed: int, trial: int) -> np.random.Generator:
    """Stream used to draw the trial's observations."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial, 3]))


class _Recv:
    def __repr__(self):
        return "RECV"


RECV = _Recv()


@dataclass
class PartyResult:
    estimate: object = None
    error_kind: ErrorKind = ErrorKind.NONE
    stop_round: int | None = None


class Endpoint:
    """One party's coroutine plus its pending action."""

    _DONE = object()

    def __init__(self, gen):
        self.gen = gen
        self.pending = None
        self.result = None
        self._advance(None)

    def _advance(self, value):
        try:
            self.pending = self.gen.send(value)
        except StopIteration as stop:
            self.pending = self._DONE
            self.result = stop.value if stop.value is not None else PartyResult()

    @property
    def done(self) -> bool:
        return self.pending is self._DONE

    @property
    def outgoing(self):
        return self.pending if isinstance(self.pending, Message) else None

    @property
    def waiting(self) -> bool:
        return self.pending is RECV

    def sent(self):
        self._advance(None)

    def deliver(self, msg: Message):
        self._advance(msg)

    def close(self):
        self.gen.close()


def assemble_outcome(protocol, x, y, transcript: Transcript, r1, r2, budget_hit: bool) -> ExchangeOutcome:
    """Combine party results into an :class:`ExchangeOutcome`."""
    x_hat = r2.estimate if r2 is not None else None
    y_hat = r1.estimate if r1 is not None else None
    kinds = [r.error_kind for r in (r2, r1) if r is not None and r.error_kind != ErrorKind.NONE]
    if budget_hit:
        err = ErrorKind.BUDGET_EXCEEDED
    elif kinds:
        err = kinds[0]
    else:
        err = ErrorKind.NONE
    aborted = err != ErrorKind.NONE
    ok_x = x_hat is not None and np.array_equal(np.asarray(x_hat), np.asarray(x))
    if getattr(protocol, "exchange", True):
        ok_y = y_hat is not None and np.array_equal(np.asarray(y_hat), np.asarray(y))
    else:
        ok_y = True
    stop = r2.stop_round if r2 is not None else None
    p2 = transcript.bits_of(PHASE2_KINDS)
    return ExchangeOutcome(
        x_hat=None if x_hat is None else np.asarray(x_hat),
        y_hat=None if y_hat is None else np.asarray(y_hat),
        correct=bool(ok_x and ok_y and not aborted),
        total_bits=transcript.total_bits,
        rounds_used=sum(1 for m in transcript.entries if m.kind == Kind.HASH_BLOCK),
        aborted=aborted,
        error_kind=err,
        stop_round=stop,
        bits_phase1=transcript.total_bits - p2,
        bits_phase2=p2,
    )


def run_session(protocol, x_seq, y_seq, randomness: SessionRandomness, budget=None):
    """Drive both parties turn by turn.

    A message is checked against ``budget`` before it is sent; if it would
    push the transcript past the budget the session aborts with
    ``budget_exceeded``.  Returns ``(ExchangeOutcome, Transcript)``.
    """
    if budget is not None and budget < 0:
        raise ValueError("budget must be nonnegative")
    ends = {1: Endpoint(protocol.party1(x_seq, randomness.for_party(1))),
            2: Endpoint(protocol.party2(y_seq, randomness.for_party(2)))}
    inbox = {1: deque(), 2: deque()}
    transcript = Transcript()
    budget_hit = False
    while not budget_hit:
        progressed = False
        for k in (1, 2):
            ep = ends[k]
            msg = ep.outgoing
            if msg is not None:
                if budget is not None and transcript.total_bits + msg.nbits > budget:
                    budget_hit = True
                    break
                transcript.append(msg)
                inbox[3 - k].append(msg)
                ep.sent()
                progressed = True
            elif ep.waiting and inbox[k]:
                ep.deliver(inbox[k].popleft())
                progressed = True
        if not progressed:
            break
    for ep in ends.values():
        if not ep.done:
            ep.close()
    out = assemble_outcome(protocol, x_seq, y_seq, transcript, ends[1].result, ends[2].result, budget_hit)
    return out, transcript


@dataclass
class MonteCarloSummary:
    trials: int
    errors: int
    bit_histogram: Counter
    stop_counts: Counter
    error_kinds: Counter
    outcomes: list = field(repr=False, default_factory=list)
    transcripts: list | None = field(repr=False, default=None)

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def mean_bits(self) -> float:
        n = sum(self.bit_histogram.values())
        return sum(b * c for b, c in self.bit_histogram.items()) / n if n else 0.0

    @property
    def std_bits(self) -> float:
        n = sum(self.bit_histogram.values())
        if n < 2:
            return 0.0
        mu = self.mean_bits
        return (sum(c * (b - mu) ** 2 for b, c in self.bit_histogram.items()) / (n - 1)) ** 0.5


def run_trial(protocol, src: SequenceSource, master_seed: int, trial: int, budget=None):
    """One trial with seeds derived from ``(master_seed, trial)``."""
    x, y = sample(src, source_rng(master_seed, trial))
    out, tr = run_session(protocol, x, y, SessionRandomness.derive(master_seed, trial), budget)
    return x, y, out, tr


def monte_carlo(protocol, src: SequenceSource, trials: int, master_seed: int, budget=None,
                order=None, keep_transcripts: bool = False) -> MonteCarloSummary:
    """Run ``trials`` independent sessions; per-trial seeds depend only on the trial index.

    ``order`` optionally permutes execution order; the summary does not
    depend on it.
    """
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    ids = list(range(trials)) if order is None else list(order)
    if sorted(ids) != list(range(trials)):
        raise ValueError("order must be a permutation of range(trials)")
    results = {}
    for t in ids:
        results[t] = run_trial(protocol, src, master_seed, t, budget)
    outcomes = [results[t][2] for t in range(trials)]
    return MonteCarloSummary(
        trials=trials,
        errors=sum(not o.correct for o in outcomes),
        bit_histogram=Counter(o.total_bits for o in outcomes),
        stop_counts=Counter(o.stop_round for o in outcomes),
        error_kinds=Counter(o.error_kind.value for o in outcomes),
        outcomes=outcomes,
        transcripts=[results[t][3] for t in range(trials)] if keep_transcripts else None,
    )
