"""Slepian-Wolf and data-exchange protocols built on the session loop.

Decoders are exhaustive: party 2 scores every ``x`` in ``X^n``, so block
lengths are gated to ``n log2|X| <= 24``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ZeroProbability
from .hashing import HashChain, all_sequences, block_value, hash_indices, input_bits_for, sequence_index
from .session import (
    RECV,
    ErrorKind,
    Kind,
    Message,
    PartyResult,
    SessionRandomness,
    ack,
    nack,
    run_session,
)
from .sources import DensityDistribution, SequenceSource
from .spectrum import SpectrumPlan, slice_indices, tail_quantile

MAX_DECODER_BITS = 24


class CandidateSpace:
    """All length-``n`` sequences over ``X`` with their indices, for exhaustive decoding."""

    def __init__(self, src: SequenceSource):
        bits = src.n * math.log2(src.alphabet_x)
        if bits > MAX_DECODER_BITS + 1e-9:
            raise ValueError(f"exhaustive decoder needs n*log2|X| <= {MAX_DECODER_BITS}, got {bits:.2f}")
        self.src = src
        self.seqs = all_sequences(src.n, src.alphabet_x)
        self.indices = np.arange(len(self.seqs), dtype=np.uint64)
        self.m = input_bits_for(src.n, src.alphabet_x)

    def cond_density(self, y) -> np.ndarray:
        """``h(x|y)`` for every candidate ``x`` (``inf`` when ``P(x, y) = 0``)."""
        ys = np.broadcast_to(np.asarray(y), self.seqs.shape)
        with np.errstate(invalid="ignore"):
            lp = self.src.log2_prob(self.seqs, ys)
            h = self.src.log2_prob_y(np.asarray(y)[None, :])[0] - lp
        return np.where(np.isfinite(lp), h, np.inf)


# --------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class InteractiveSwParams:
    """Protocol 1 parameters: a plan over ``h(X|Y)``, slack ``eta`` and first-message size ``l``.

    ``l = ceil(lambda_min + delta + eta)``; ``eta_effective`` is the slack
    actually realized after rounding up.
    """

    plan: SpectrumPlan
    eta: float
    l: int

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("first message must carry at least one bit")
        d = self.plan.delta
        if d < 1 or d != int(d):
            raise ValueError("slice width must be a whole number of bits (>= 1)")

    @classmethod
    def from_plan(cls, plan: SpectrumPlan, eta: float) -> "InteractiveSwParams":
        return cls(plan, float(eta), int(math.ceil(plan.lambda_min + plan.delta + eta - 1e-12)))

    @property
    def delta(self) -> int:
        return int(self.plan.delta)

    @property
    def eta_effective(self) -> float:
        return self.l - self.plan.lambda_min - self.plan.delta

    def phase1_bits(self, i: int) -> int:
        """Bits used by a run that stops with ACK at slice ``i``."""
        return self.l + (i - 1) * self.delta + i

    def as_row(self) -> dict:
        return {**self.plan.as_row(), "eta": self.eta, "l": self.l}


@dataclass(frozen=True)
class ExchangeParams:
    sw: InteractiveSwParams
    l_max: int

    def __post_init__(self):
        if self.l_max < self.sw.l:
            raise ValueError("budget must cover the first message")


# --------------------------------------------------------------------------
# conditional exact code (interval coding on exact rationals)


def _component_tables(src: SequenceSource):
    out = []
    for w, js in src.components:
        if w <= 0:
            continue
        wq = w if isinstance(w, Fraction) else Fraction(float(w))
        t = js.exact_table()
        row = [sum(r) for r in t]
        out.append((wq, t, row))
    return out


def _conditional_steps(src: SequenceSource, x_seq):
    """Yield per-symbol conditional pmfs ``P(y_i = . | x, y_<i)`` lazily.

    The generator receives the realized ``y_i`` after each step so that
    mixture posteriors can be updated.
    """
    comps = _component_tables(src)
    ny = src.alphabet_y
    post = []
    for wq, t, row in comps:
        p = wq
        for a in x_seq:
            p *= row[int(a)]
        post.append(p)
    for a in x_seq:
        a = int(a)
        z = sum(post)
        if z == 0:
            raise ZeroProbability("x sequence has zero probability")
        cond = [Fraction(0)] * ny
        for pk, (wq, t, row) in zip(post, comps):
            if pk == 0:
                continue
            for b in range(ny):
                if t[a][b]:
                    cond[b] += pk / z * t[a][b] / row[a]
        b = yield cond
        post = [pk * (t[a][b] / row[a] if row[a] else 0) for pk, (wq, t, row) in zip(post, comps)]


def _ceil_log2_inv(width: Fraction) -> int:
    """Smallest ``k`` with ``2^-k <= width``."""
    q = 1 / width
    c = q.numerator // q.denominator + (q.numerator % q.denominator != 0)
    return (c - 1).bit_length()


def conditional_interval(src: SequenceSource, x_seq, y_seq):
    """Exact ``[low, low + width)`` assigned to ``y`` given ``x``; ``width = P(y|x)``."""
    low, width = Fraction(0), Fraction(1)
    steps = _conditional_steps(src, x_seq)
    cond = next(steps)
    for i, b in enumerate(y_seq):
        b = int(b)
        if cond[b] == 0:
            raise ZeroProbability(f"P(y|x) = 0 at position {i}")
        low += width * sum(cond[:b], Fraction(0))
        width *= cond[b]
        try:
            cond = steps.send(b)
        except StopIteration:
            pass
    return low, width


def conditional_encode(src: SequenceSource, x_seq, y_seq):
    """Prefix-free codeword for ``y`` given ``x`` as ``(value, nbits)``.

    Length is ``ceil(-log2 P(y|x)) + 1``; a deterministic conditional
    therefore costs one bit.
    """
    low, width = conditional_interval(src, x_seq, y_seq)
    L = _ceil_log2_inv(width) + 1
    num = low.numerator << L
    c = -(-num // low.denominator)
    return c, L


def conditional_decode(src: SequenceSource, x_seq, value: int, nbits: int) -> np.ndarray:
    """Inverse of :func:`conditional_encode`."""
    t = Fraction(value, 1 << nbits)
    low, width = Fraction(0), Fraction(1)
    out = []
    steps = _conditional_steps(src, x_seq)
    cond = next(steps)
    for _ in range(len(x_seq)):
        acc = Fraction(0)
        chosen = None
        for b, p in enumerate(cond):
            if p and low + width * (acc + p) > t:
                chosen = b
                break
            acc += p
        if chosen is None:
            raise ValueError("codeword does not decode to a sequence")
        low += width * acc
        width *= cond[chosen]
        out.append(chosen)
        try:
            cond = steps.send(chosen)
        except StopIteration:
            pass
    return np.array(out, dtype=np.int64)


# --------------------------------------------------------------------------
# protocols


class BaselineSW:
    """One-shot Slepian-Wolf: ``l`` hash bits, decode under ``h(x|y) <= l - eta``."""

    exchange = False
    name = "baseline_sw"

    def __init__(self, src: SequenceSource, l: int, eta: float):
        if not l > eta:
            raise ValueError("need l > eta")
        self.src, self.l, self.eta = src, int(l), float(eta)
        self.space = CandidateSpace(src)

    def chain(self, public_seed: int) -> HashChain:
        return HashChain(public_seed, self.space.m, (self.l,))

    def party1(self, x, rnd):
        chain = self.chain(rnd.public_seed)
        yield Message(1, Kind.HASH_BLOCK, self.l, block_value(chain, sequence_index(x, self.src.alphabet_x), 0))
        return PartyResult()

    def party2(self, y, rnd):
        msg = yield RECV
        chain = self.chain(rnd.public_seed)
        h = self.space.cond_density(y)
        match = (hash_indices(chain, self.space.indices) == msg.value) & (h <= self.l - self.eta + 1e-9)
        hits = np.flatnonzero(match)
        if len(hits) == 1:
            return PartyResult(self.space.seqs[hits[0]].copy(), ErrorKind.NONE, 1)
        return PartyResult(None, ErrorKind.NO_CANDIDATE if len(hits) == 0 else ErrorKind.AMBIGUOUS, 1)


class InteractiveSW:
    """Protocol 1: spectrum-sliced interactive Slepian-Wolf compression of ``X`` given ``Y``.

    Round ``i`` adds a hash block (``l`` bits in round 1, ``delta`` after);
    party 2 looks for a unique hash-consistent ``x`` in slice ``T_i`` of
    ``h(x|y)``.  Unique: ACK and stop.  None: NACK and continue (the NACK
    after slice ``N`` ends the run in error).  Several: declare error.
    """

    exchange = False
    name = "interactive_sw"

    def __init__(self, src: SequenceSource, params: InteractiveSwParams):
        self.src, self.params = src, params
        self.space = CandidateSpace(src)

    def chain(self, public_seed: int) -> HashChain:
        p = self.params
        return HashChain(public_seed, self.space.m, (p.l,) + (p.delta,) * (p.plan.n_slices - 1))

    def party1(self, x, rnd):
        chain = self.chain(rnd.public_seed)
        idx = sequence_index(x, self.src.alphabet_x)
        for r, size in enumerate(chain.block_sizes):
            yield Message(1, Kind.HASH_BLOCK, size, block_value(chain, idx, r))
            reply = yield RECV
            if reply.kind == Kind.ACK:
                result = yield from self.after_ack(x, rnd)
                return result
        return PartyResult()

    def after_ack(self, x, rnd):
        return PartyResult()
        yield  # pragma: no cover

    def party2(self, y, rnd):
        chain = self.chain(rnd.public_seed)
        total = chain.total_bits
        slices = slice_indices(self.params.plan, self.space.cond_density(y))
        full = hash_indices(chain, self.space.indices)
        got, used = 0, 0
        for r, size in enumerate(chain.block_sizes):
            msg = yield RECV
            got = (got << size) | msg.value
            used += size
            prefix = full >> np.uint64(total - used) if full.dtype == np.uint64 else np.array([int(v) >> (total - used) for v in full])
            hits = np.flatnonzero((slices == r + 1) & (prefix == got))
            if len(hits) > 1:
                return PartyResult(None, ErrorKind.AMBIGUOUS, r + 1)
            if len(hits) == 1:
                x_hat = self.space.seqs[hits[0]].copy()
                yield ack(2)
                result = yield from self.after_decode(x_hat, y, r + 1, rnd)
                return result
            yield nack(2)
        return PartyResult(None, ErrorKind.NO_CANDIDATE, self.params.plan.n_slices)

    def after_decode(self, x_hat, y, i, rnd):
        return PartyResult(x_hat, ErrorKind.NONE, i)
        yield  # pragma: no cover


class DataExchange(InteractiveSW):
    """Protocol 1 followed by an exact conditional code of ``y`` given the decoded ``x``."""

    exchange = True
    name = "data_exchange"

    def __init__(self, src: SequenceSource, params: ExchangeParams | InteractiveSwParams):
        if isinstance(params, ExchangeParams):
            self.l_max = params.l_max
            params = params.sw
        else:
            self.l_max = None
        super().__init__(src, params)

    def after_ack(self, x, rnd):
        msg = yield RECV
        return PartyResult(conditional_decode(self.src, x, msg.value, msg.nbits))

    def after_decode(self, x_hat, y, i, rnd):
        value, nbits = conditional_encode(self.src, x_hat, y)
        yield Message(2, Kind.INDEX_PAYLOAD, nbits, value)
        return PartyResult(x_hat, ErrorKind.NONE, i)


def baseline_sw(x_seq, y_seq, src: SequenceSource, l: int, eta: float, randomness: SessionRandomness, budget=None):
    return run_session(BaselineSW(src, l, eta), x_seq, y_seq, randomness, budget)


def interactive_sw(x_seq, y_seq, src: SequenceSource, params: InteractiveSwParams, randomness: SessionRandomness, budget=None):
    return run_session(InteractiveSW(src, params), x_seq, y_seq, randomness, budget)


def data_exchange(x_seq, y_seq, src: SequenceSource, params: ExchangeParams, randomness: SessionRandomness):
    return run_session(DataExchange(src, params), x_seq, y_seq, randomness, params.l_max)


@dataclass(frozen=True)
class Theorem2Budget:
    """Budget ``l_max = floor(lambda_eps + delta + N + eta + 1)`` and its error bound."""

    lambda_eps: float
    l_max: int
    bound: float
    p_t0: float
    delta: float
    n_slices: int
    eta: float


def theorem2_budget(sum_dist: DensityDistribution, epsilon: float, plan: SpectrumPlan, eta: float,
                    p_t0: float = 0.0) -> Theorem2Budget:
    """Data-exchange budget from the tail quantile of ``h(X△Y)`` and the slicing plan.

    ``p_t0`` is ``P(T_0)`` of the plan; the predicted error bound is
    ``epsilon + p_t0 + N 2^-eta``.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    lam = tail_quantile(sum_dist, epsilon)
    raw = lam + plan.delta + plan.n_slices + eta + 1
    return Theorem2Budget(lam, int(math.floor(raw + 1e-9)), epsilon + p_t0 + plan.n_slices * 2.0**-eta,
                          p_t0, plan.delta, plan.n_slices, eta)
