"""Joint types, enumerative coding within conditional type classes, and the
type-based interactive data-exchange protocol with its hash-count check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import NotInClass
from .hashing import HashChain, all_sequences, block_value, block_values, hash_indices, input_bits_for, sequence_index
from .session import RECV, ErrorKind, Kind, Message, PartyResult, ack, nack
from .sources import SequenceSource

ENTROPY_TOL = 1e-12


def _h_terms(num, den):
    """``sum num/total * log2(den/num)`` helper on integer arrays (0 log 0 = 0)."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(num > 0, num * np.log2(np.where(num > 0, den / np.where(num > 0, num, 1), 1)), 0.0)
    return t


@dataclass(frozen=True)
class JointType:
    """Joint type of a sequence pair: an ``|X| x |Y|`` count matrix summing to ``n``."""

    counts: tuple

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or np.any(c < 0):
            raise ValueError("counts must be a nonnegative matrix")

    @classmethod
    def from_array(cls, arr) -> "JointType":
        return cls(tuple(tuple(int(v) for v in r) for r in np.asarray(arr)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.array.sum())

    @property
    def pmf(self):
        """Exact empirical pmf."""
        n = self.n
        return tuple(tuple(Fraction(v, n) for v in r) for r in self.counts)

    @property
    def row_counts(self) -> np.ndarray:
        return self.array.sum(axis=1)

    @property
    def col_counts(self) -> np.ndarray:
        return self.array.sum(axis=0)

    def h_x_given_y(self) -> float:
        c = self.array
        return float(_h_terms(c, np.broadcast_to(self.col_counts[None, :], c.shape)).sum() / self.n)

    def h_y_given_x(self) -> float:
        c = self.array
        return float(_h_terms(c, np.broadcast_to(self.row_counts[:, None], c.shape)).sum() / self.n)

    def h_sum(self) -> float:
        return self.h_x_given_y() + self.h_y_given_x()


def joint_type(x_seq, y_seq, alphabet_x: int = 2, alphabet_y: int = 2) -> JointType:
    x, y = np.asarray(x_seq), np.asarray(y_seq)
    if x.shape != y.shape:
        raise ValueError("sequences must have equal length")
    c = np.zeros((alphabet_x, alphabet_y), dtype=np.int64)
    np.add.at(c, (x, y), 1)
    return JointType.from_array(c)


def _multinomial(n: int, parts) -> int:
    out = math.factorial(n)
    for p in parts:
        out //= math.factorial(int(p))
    return out


def type_class_size(jt: JointType) -> int:
    """Number of pairs with joint type ``jt``."""
    return _multinomial(jt.n, jt.array.ravel())


def conditional_class_size(jt: JointType) -> int:
    """``|T_{Y|X}(x)|`` for any ``x`` of the row type of ``jt``."""
    out = 1
    for row in jt.array:
        out *= _multinomial(int(row.sum()), row)
    return out


def conditional_index(x_seq, y_seq, jt: JointType | None = None) -> int:
    """Lexicographic rank of ``y`` among all ``y'`` with ``type(x, y') = jt``.

    Raises
    ------
    NotInClass
        If ``type(x, y)`` differs from ``jt``.
    """
    x, y = np.asarray(x_seq), np.asarray(y_seq)
    if jt is None:
        jt = joint_type(x, y, int(x.max(initial=0)) + 1, int(y.max(initial=0)) + 1)
    rem = jt.array.copy()
    if x.shape != y.shape or len(x) != jt.n:
        raise NotInClass("sequence length does not match the type")
    try:
        own = joint_type(x, y, *rem.shape)
    except IndexError:
        raise NotInClass("symbol outside the type's alphabet") from None
    if own != jt:
        raise NotInClass("y is not in the conditional type class of x")
    rows = rem.sum(axis=1)
    total = conditional_class_size(jt)
    rank = 0
    for a, b in zip(x, y):
        a, b = int(a), int(b)
        r = int(rows[a])
        for bb in range(b):
            if rem[a, bb]:
                rank += total * int(rem[a, bb]) // r
        total = total * int(rem[a, b]) // r
        rem[a, b] -= 1
        rows[a] -= 1
    return rank


def conditional_unrank(x_seq, jt: JointType, index: int) -> np.ndarray:
    """Inverse of :func:`conditional_index`."""
    x = np.asarray(x_seq)
    rem = jt.array.copy()
    rows = rem.sum(axis=1)
    if not np.array_equal(np.bincount(x, minlength=rem.shape[0]), rows):
        raise NotInClass("x does not have the row type of jt")
    total = conditional_class_size(jt)
    if not 0 <= index < total:
        raise NotInClass(f"index {index} outside class of size {total}")
    out = np.zeros(len(x), dtype=np.int64)
    for i, a in enumerate(x):
        a = int(a)
        r = int(rows[a])
        for b in range(rem.shape[1]):
            if not rem[a, b]:
                continue
            block = total * int(rem[a, b]) // r
            if index < block:
                out[i] = b
                total = block
                rem[a, b] -= 1
                rows[a] -= 1
                break
            index -= block
    return out


# --------------------------------------------------------------------------
# decoding schedule


@dataclass(frozen=True)
class PhiSchedule:
    """Rate ``R`` and step ``delta`` (bits per symbol); ``r = ceil(R / delta)`` rounds."""

    R: float
    delta: float

    def __post_init__(self):
        if self.R <= 0 or self.delta <= 0:
            raise ValueError("R and delta must be positive")

    @property
    def r(self) -> int:
        return int(math.ceil(self.R / self.delta - 1e-12))

    def rate(self, i: int) -> float:
        return i * self.delta


def phi_value(schedule: PhiSchedule, h_y_given_x: float) -> int:
    """Decoding round assigned to a conditional entropy ``H(Y|X)``; 0 means never."""
    gap = schedule.R - h_y_given_x
    if gap - schedule.delta <= 1e-12:
        return 0
    i = int(math.ceil(gap / schedule.delta - 1e-9)) - 1
    return max(1, min(i, schedule.r))


def phi(schedule: PhiSchedule, jt: JointType) -> int:
    return phi_value(schedule, jt.h_y_given_x())


def delta_n(n: int, alphabet_x: int, alphabet_y: int) -> float:
    """``|X|^2 |Y| log2(n+1) / n``."""
    return alphabet_x**2 * alphabet_y * math.log2(n + 1) / n


# --------------------------------------------------------------------------
# empirical entropies of all candidates against a fixed y


def candidate_entropies(cands: np.ndarray, y, alphabet_x: int, alphabet_y: int):
    """Empirical ``H(x|y)`` and ``H(y|x)`` for every row of ``cands``."""
    y = np.asarray(y)
    n = len(y)
    K = len(cands)
    c = np.zeros((K, alphabet_x, alphabet_y), dtype=np.int64)
    for a in range(alphabet_x):
        xa = cands == a
        for b in range(alphabet_y):
            c[:, a, b] = (xa & (y == b)[None, :]).sum(axis=1)
    col = c.sum(axis=1, keepdims=True)
    row = c.sum(axis=2, keepdims=True)
    hx = _h_terms(c, np.broadcast_to(col, c.shape)).sum(axis=(1, 2)) / n
    hy = _h_terms(c, np.broadcast_to(row, c.shape)).sum(axis=(1, 2)) / n
    return hx, hy, c


# --------------------------------------------------------------------------
# Protocol 2


class TypeProtocol:
    """Type-based interactive data exchange.

    Round ``i`` adds ``ceil(n delta)`` hash bits.  Party 2 accepts ``x`` if
    it is hash-consistent, ``phi(type(x, y)) = i`` and ``x`` minimizes the
    empirical ``H(x△y)`` among all hash-consistent sequences; two or more
    such ``x`` is an error.  After ACK party 2 sends the joint type
    (fixed-width counts, row-major) and the index of ``y`` in
    ``T_{Y|X}(x)``.
    """

    exchange = True
    name = "type_protocol"

    def __init__(self, src: SequenceSource, schedule: PhiSchedule, verify: bool = False,
                 max_decoder_bits: int = 24):
        n, nx = src.n, src.alphabet_x
        if n * math.log2(nx) > max_decoder_bits + 1e-9:
            raise ValueError("exhaustive decoder gate exceeded")
        self.src, self.schedule = src, schedule
        self.nx, self.ny, self.n = nx, src.alphabet_y, n
        self.block = int(math.ceil(n * schedule.delta - 1e-12))
        self.m = input_bits_for(n, nx)
        self.seqs = all_sequences(n, nx)
        self.field_bits = int(math.ceil(math.log2(n + 1)))
        self.verify = verify
        self._chains: dict = {}
        self._hashes: dict = {}
        self._ent: dict = {}

    @property
    def header_bits(self) -> int:
        return self.nx * self.ny * self.field_bits

    def chain(self, public_seed: int) -> HashChain:
        """Hash chain for a public seed; with ``verify`` it is redrawn until the count bound holds."""
        if public_seed not in self._chains:
            if self.verify:
                self._chains[public_seed] = draw_verified_chain(public_seed, self.schedule, self.n)[0]
            else:
                self._chains[public_seed] = HashChain(public_seed, self.m, (self.block,) * self.schedule.r)
        return self._chains[public_seed]

    def _full_hashes(self, chain: HashChain):
        key = (chain.seed, chain.block_sizes)
        if key not in self._hashes:
            self._hashes[key] = hash_indices(chain, np.arange(len(self.seqs), dtype=np.uint64))
        return self._hashes[key]

    def _entropies(self, y):
        key = tuple(int(v) for v in y)
        if key not in self._ent:
            hx, hy, counts = candidate_entropies(self.seqs, y, self.nx, self.ny)
            phis = np.array([phi_value(self.schedule, v) for v in hy])
            self._ent[key] = (hx + hy, phis, counts)
        return self._ent[key]

    def encode_header(self, jt: JointType) -> int:
        v = 0
        for c in jt.array.ravel():
            v = (v << self.field_bits) | int(c)
        return v

    def decode_header(self, value: int) -> JointType:
        k = self.nx * self.ny
        vals = [(value >> (self.field_bits * (k - 1 - i))) & ((1 << self.field_bits) - 1) for i in range(k)]
        return JointType.from_array(np.array(vals).reshape(self.nx, self.ny))

    def index_bits(self, jt: JointType) -> int:
        size = conditional_class_size(jt)
        return (size - 1).bit_length()

    def party1(self, x, rnd):
        chain = self.chain(rnd.public_seed)
        idx = sequence_index(x, self.nx)
        for r, size in enumerate(chain.block_sizes):
            yield Message(1, Kind.HASH_BLOCK, size, block_value(chain, idx, r))
            reply = yield RECV
            if reply.kind == Kind.ACK:
                hdr = yield RECV
                jt = self.decode_header(hdr.value)
                body = yield RECV
                try:
                    y_hat = conditional_unrank(x, jt, body.value)
                except NotInClass:
                    y_hat = None
                return PartyResult(y_hat)
        return PartyResult()

    def party2(self, y, rnd):
        chain = self.chain(rnd.public_seed)
        total = chain.total_bits
        hsum, phis, counts = self._entropies(y)
        full = self._full_hashes(chain)
        got, used = 0, 0
        for r, size in enumerate(chain.block_sizes):
            msg = yield RECV
            got = (got << size) | msg.value
            used += size
            if full.dtype == np.uint64:
                consistent = (full >> np.uint64(total - used)) == got
            else:
                consistent = np.array([int(v) >> (total - used) == got for v in full])
            best = hsum[consistent].min() if consistent.any() else np.inf
            hits = np.flatnonzero(consistent & (phis == r + 1) & (hsum <= best + ENTROPY_TOL))
            if len(hits) > 1:
                return PartyResult(None, ErrorKind.AMBIGUOUS, r + 1)
            if len(hits) == 1:
                k = int(hits[0])
                x_hat = self.seqs[k].copy()
                yield ack(2)
                jt = JointType.from_array(counts[k])
                yield Message(2, Kind.TYPE_HEADER, self.header_bits, self.encode_header(jt))
                yield Message(2, Kind.INDEX_PAYLOAD, self.index_bits(jt), conditional_index(x_hat, y, jt))
                return PartyResult(x_hat, ErrorKind.NONE, r + 1)
            yield nack(2)
        return PartyResult(None, ErrorKind.NO_CANDIDATE, self.schedule.r)


# --------------------------------------------------------------------------
# hash-count lemma check (binary alphabets)


@dataclass
class HashCountReport:
    """Exhaustive ``N_h`` counts per joint triple type and the lemma's bound.

    ``rows`` maps a triple count vector (cells ``(x, x̂, y)`` in row-major
    order) to ``(N_h, |T_XY|, bound_ratio, phi_hat)``; ``violations``
    lists the triple types where ``N_h / |T_XY|`` exceeds the bound.
    """

    n: int
    seed: int
    passed: bool
    violations: list
    rows: dict = field(repr=False)
    attempts: int = 1


def _agreement_prefix(chain: HashChain, K: int) -> np.ndarray:
    """``A[x, x̂]`` = number of leading rounds on which the hashes agree."""
    idx = np.arange(K, dtype=np.uint64)
    A = np.zeros((K, K), dtype=np.int64)
    alive = np.ones((K, K), dtype=bool)
    for r in range(chain.rounds):
        vals = block_values(chain, idx, r)
        alive &= vals[:, None] == vals[None, :]
        A += alive
    return A


def hash_count_check(chain: HashChain, schedule: PhiSchedule, n: int) -> HashCountReport:
    """Exhaustive check of the hash-count bound for binary ``X``, ``Y``.

    For every triple type ``(X̄, X̂, Ȳ)`` with ``phi(P_{X̂Ȳ}) != 0``:
    ``N_h / |T_{X̄Ȳ}| <= 2^{-n (R_phi - H(X̂|X̄Ȳ) - delta_n)}``.
    """
    if n > 10:
        raise ValueError("exhaustive triple enumeration is limited to n <= 10")
    K = 2**n
    full = np.uint64(K - 1)
    vals = np.arange(K, dtype=np.uint64)
    A = _agreement_prefix(chain, K)
    dn = delta_n(n, 2, 2)
    base = n + 1
    weights = base ** np.arange(8, dtype=np.int64)[::-1]
    masks = (lambda v, bit: v if bit else (~v) & full)
    found: dict = {}
    for y in range(K):
        yv = np.uint64(y)
        cell = np.zeros((K, K, 8), dtype=np.int64)
        for a in (0, 1):
            ma = masks(vals, a)
            for ah in (0, 1):
                mah = masks(vals, ah)
                for b in (0, 1):
                    mb = yv if b else (~yv) & full
                    cell[:, :, 4 * a + 2 * ah + b] = np.bitwise_count(ma[:, None] & mah[None, :] & mb).astype(np.int64)
        # phi of (x̂, y): H(Y|X̂) from cells summed over x
        cxh = cell[0].reshape(K, 2, 2, 2).sum(axis=1)  # (x̂, ah, b), marginal over a
        rowc = cxh.sum(axis=2, keepdims=True)
        hy_hat = _h_terms(cxh, np.broadcast_to(rowc, cxh.shape)).sum(axis=(1, 2)) / n
        phi_hat = np.array([phi_value(schedule, v) for v in hy_hat])
        code = cell @ weights
        valid = (A >= phi_hat[None, :]) & (phi_hat[None, :] > 0)
        np.fill_diagonal(valid, False)
        xs, xh = np.nonzero(valid)
        key = np.unique(code[xs, xh] * K + xs)
        for c, cnt in zip(*np.unique(key // K, return_counts=True)):
            found[int(c)] = found.get(int(c), 0) + int(cnt)
        # register zero-count triple types too
        for c in np.unique(code[(phi_hat[None, :] > 0) & ~np.eye(K, dtype=bool)]):
            found.setdefault(int(c), 0)
    rows, violations = {}, []
    for c, nh in found.items():
        cells = np.array([(c // int(w)) % base for w in weights]).reshape(2, 2, 2)  # (a, ah, b)
        cxy = cells.sum(axis=1)
        size = _multinomial(n, cxy.ravel())
        chy = cells.sum(axis=0)  # (ah, b)
        hy_hat = float(_h_terms(chy, np.broadcast_to(chy.sum(axis=1, keepdims=True), chy.shape)).sum() / n)
        ph = phi_value(schedule, hy_hat)
        # H(X̂ | X̄ Ȳ)
        cab = cells.sum(axis=1, keepdims=True)
        h_cond = float(_h_terms(cells, np.broadcast_to(cab, cells.shape)).sum() / n)
        exponent = n * (schedule.rate(ph) - h_cond - dn)
        bound = 2.0 ** (-exponent)
        ratio = nh / size
        rows[tuple(cells.ravel())] = (nh, size, bound, ph)
        if ratio > bound * (1 + 1e-12):
            violations.append(tuple(cells.ravel()))
    return HashCountReport(n, chain.seed, not violations, violations, rows)


def draw_verified_chain(public_seed: int, schedule: PhiSchedule, n: int, max_redraws: int = 16):
    """Draw hash chains from derived seeds until :func:`hash_count_check` passes.

    Raises
    ------
    RuntimeError
        If no chain passes within ``max_redraws`` attempts.
    """
    block = int(math.ceil(n * schedule.delta - 1e-12))
    for attempt in range(1, max_redraws + 1):
        seed = int(np.random.SeedSequence([public_seed, attempt]).generate_state(1, np.uint64)[0])
        chain = HashChain(seed, n, (block,) * schedule.r)  # binary: m = n
        rep = hash_count_check(chain, schedule, n)
        if rep.passed:
            rep.attempts = attempt
            return chain, rep
    raise RuntimeError(f"no hash chain satisfied the count bound in {max_redraws} draws")
