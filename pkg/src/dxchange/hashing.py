"""Seeded, incrementally extendable GF(2) linear hash family.

A :class:`HashChain` is a stack of row blocks; block ``i`` holds ``Δ_i`` rows
of an ``m``-column binary matrix.  Hashing a sequence multiplies the
matrix with the ``m``-bit index of the sequence over GF(2).  Uniform random
matrices form an XOR-universal (hence 2-universal) family.

Row expansion (fixed so that peers agree bit for bit): for round ``r``
(0-based) the byte stream is ``SHAKE-256(b"DXHC" || be64(seed) || be32(r)
|| be32(m))``.  It is cut into chunks of ``ceil(m/8)`` bytes; row ``j`` of
the block is the big-endian integer of chunk ``j`` shifted right so that
only its top ``m`` bits remain.  Bit ``m-1`` of a row multiplies the most
significant bit of the input index.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .errors import EncodingOverflow

_DOMAIN = b"DXHC"


def expand_rows(seed: int, round_index: int, m: int, count: int) -> tuple:
    """Deterministic pseudorandom rows for one round block."""
    if count == 0:
        return ()
    if m == 0:
        return (0,) * count
    nb = (m + 7) // 8
    shift = 8 * nb - m
    stream = hashlib.shake_256(_DOMAIN + struct.pack(">QII", seed & (2**64 - 1), round_index, m)).digest(nb * count)
    return tuple(int.from_bytes(stream[j * nb:(j + 1) * nb], "big") >> shift for j in range(count))


@dataclass(frozen=True)
class HashChain:
    """Public-seeded hash with ``total_bits = sum(block_sizes)`` output bits.

    Parameters
    ----------
    seed : int
        64-bit public seed.
    input_bits : int
        Width ``m`` of the encoded input index.
    block_sizes : tuple of int
        Row counts per round, in order.
    zero_rows : bool
        Test hook: every row is zero.
    """

    seed: int
    input_bits: int
    block_sizes: tuple = ()
    zero_rows: bool = False

    def __post_init__(self):
        if self.input_bits < 0:
            raise ValueError("input width must be nonnegative")
        if any(b < 1 for b in self.block_sizes):
            raise ValueError("block sizes must be >= 1")

    @property
    def total_bits(self) -> int:
        return sum(self.block_sizes)

    @property
    def rounds(self) -> int:
        return len(self.block_sizes)

    def extend(self, delta_bits: int) -> "HashChain":
        return extend(self, delta_bits)

    def prefix(self, rounds: int) -> "HashChain":
        """Chain made of the first ``rounds`` blocks."""
        return replace(self, block_sizes=self.block_sizes[:rounds])

    @cached_property
    def blocks(self) -> tuple:
        """Row blocks as tuples of Python ints."""
        if self.zero_rows:
            return tuple((0,) * b for b in self.block_sizes)
        return tuple(expand_rows(self.seed, r, self.input_bits, b) for r, b in enumerate(self.block_sizes))

    @cached_property
    def rows(self) -> tuple:
        return tuple(r for blk in self.blocks for r in blk)

    def matrix(self) -> np.ndarray:
        """Dense ``total_bits x m`` 0/1 matrix (column 0 is the input MSB)."""
        m = self.input_bits
        out = np.zeros((self.total_bits, m), dtype=np.uint8)
        for i, r in enumerate(self.rows):
            for j in range(m):
                out[i, j] = (r >> (m - 1 - j)) & 1
        return out

    @cached_property
    def _rows_u64(self):
        if self.input_bits > 64:
            return None
        return np.array(self.rows, dtype=np.uint64)


def extend(chain: HashChain, delta_bits: int) -> HashChain:
    """Append a fresh ``delta_bits``-row block; earlier blocks are unchanged."""
    if int(delta_bits) != delta_bits or delta_bits < 1:
        raise ValueError("delta_bits must be a positive integer")
    return replace(chain, block_sizes=chain.block_sizes + (int(delta_bits),))


def input_bits_for(n: int, alphabet: int) -> int:
    """Width of the mixed-radix index of a length-``n`` sequence."""
    return (alphabet**n - 1).bit_length()


def sequence_index(seq, alphabet: int) -> int:
    """Mixed-radix index of a sequence, most significant symbol first."""
    idx = 0
    for s in seq:
        s = int(s)
        if not 0 <= s < alphabet:
            raise ValueError(f"symbol {s} outside alphabet of size {alphabet}")
        idx = idx * alphabet + s
    return idx


def index_to_sequence(idx: int, n: int, alphabet: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        idx, out[i] = divmod(idx, alphabet)
    return out


def all_sequences(n: int, alphabet: int) -> np.ndarray:
    """All ``alphabet**n`` sequences in index order, shape ``(alphabet**n, n)``."""
    idx = np.arange(alphabet**n, dtype=np.int64)
    out = np.empty((idx.size, n), dtype=np.int64)
    for i in range(n - 1, -1, -1):
        idx, out[:, i] = np.divmod(idx, alphabet)
    return out


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def hash_index(chain: HashChain, index: int) -> int:
    """Hash of an ``m``-bit index; the first row gives the most significant output bit."""
    if index < 0 or index.bit_length() > chain.input_bits:
        raise EncodingOverflow(f"index {index} does not fit in {chain.input_bits} bits")
    out = 0
    for r in chain.rows:
        out = (out << 1) | _parity(r & index)
    return out


def hash_sequence(chain: HashChain, seq, alphabet: int) -> int:
    """Hash of a sequence via its mixed-radix index."""
    return hash_index(chain, sequence_index(seq, alphabet))


def hash_indices(chain: HashChain, indices) -> np.ndarray:
    """Vectorized :func:`hash_index` for ``m <= 64`` and ``total_bits <= 63``."""
    idx = np.asarray(indices, dtype=np.uint64)
    rows = chain._rows_u64
    if rows is None or chain.total_bits > 63:
        return np.array([hash_index(chain, int(i)) for i in idx.ravel()], dtype=object).reshape(idx.shape)
    if chain.input_bits < 64 and np.any(idx >> np.uint64(chain.input_bits)):
        raise EncodingOverflow("an index exceeds the input width")
    out = np.zeros(idx.shape, dtype=np.uint64)
    for r in rows:
        bit = (np.bitwise_count(idx & r) & np.uint8(1)).astype(np.uint64)
        out = (out << np.uint64(1)) | bit
    return out


def split_blocks(chain: HashChain, value: int) -> list:
    """Split a full hash value into its per-round block values."""
    out = []
    remaining = chain.total_bits
    for b in chain.block_sizes:
        remaining -= b
        out.append((value >> remaining) & ((1 << b) - 1))
    return out


def block_value(chain: HashChain, index: int, round_index: int) -> int:
    """Hash bits contributed by a single round block."""
    blk = chain.blocks[round_index]
    out = 0
    for r in blk:
        out = (out << 1) | _parity(r & index)
    return out


def block_values(chain: HashChain, indices, round_index: int) -> np.ndarray:
    """Vectorized :func:`block_value` (``m <= 64``)."""
    idx = np.asarray(indices, dtype=np.uint64)
    out = np.zeros(idx.shape, dtype=np.uint64)
    for r in chain.blocks[round_index]:
        bit = (np.bitwise_count(idx & np.uint64(r)) & np.uint8(1)).astype(np.uint64)
        out = (out << np.uint64(1)) | bit
    return out


# --------------------------------------------------------------------------
# universality certificate


@dataclass(frozen=True)
class CertificateReport:
    """Outcome of :func:`two_universal_certificate`.

    ``max_collision`` is the largest collision probability (exact mode) or
    frequency (Monte Carlo) over the examined distinct pairs; ``limit`` is
    ``2^-l`` in exact mode and the upper 5-sigma binomial band otherwise.
    """

    m: int
    l: int
    mode: str
    max_collision: float
    bound: float
    limit: float
    passed: bool
    degenerate: bool = False
    pairs_checked: int = 0
    trials: int = 0
    details: dict = field(default_factory=dict)


def _exact_certificate(m: int, l: int) -> CertificateReport:
    # a uniform random row r has parity(r & d) = 0 with frequency f_d; rows are independent
    rows = np.arange(2**m, dtype=np.uint64)
    f = np.empty(2**m)
    for d in range(2**m):
        f[d] = np.mean((np.bitwise_count(rows & np.uint64(d)) & 1) == 0)
    coll = f[1:] ** l
    details = {"per_difference": coll}
    if m * l <= 16:
        # literal enumeration of every matrix and every distinct pair
        mats = np.arange(2 ** (m * l), dtype=np.uint64)
        mask = np.uint64(2**m - 1)
        worst = 0.0
        npairs = 0
        for x in range(2**m):
            for y in range(x + 1, 2**m):
                d = np.uint64(x ^ y)
                hit = np.ones(mats.size, dtype=bool)
                for j in range(l):
                    row = (mats >> np.uint64(j * m)) & mask
                    hit &= (np.bitwise_count(row & d) & 1) == 0
                worst = max(worst, float(hit.mean()))
                npairs += 1
        details["matrix_enumeration_max"] = worst
        coll_max = max(float(coll.max()), worst)
    else:
        npairs = 2**m * (2**m - 1) // 2
        coll_max = float(coll.max())
    bound = 2.0**-l
    return CertificateReport(m, l, "exact", coll_max, bound, bound, abs(coll_max - bound) < 1e-15 and bool(np.allclose(coll, bound, rtol=0, atol=1e-15)), False, npairs, 0, details)


def two_universal_certificate(m: int, l: int, trials: int = 1000, rng=None, n_pairs: int = 8,
                              exact: bool | None = None) -> CertificateReport:
    """Certify 2-universality of the seeded family.

    Exact verification over all matrices (as products of independent
    uniform rows) when ``m <= 12`` and ``l <= 8``; otherwise a Monte Carlo
    estimate over ``trials`` public seeds for ``n_pairs`` random distinct
    index pairs, compared against ``2^-l + 5 sigma``.  A pooled rate with
    one fresh pair per seed is reported in ``details``.
    """
    if l == 0:
        return CertificateReport(m, 0, "degenerate", 1.0, 1.0, 1.0, True, True)
    if exact is None:
        exact = m <= 12 and l <= 8
    if exact:
        return _exact_certificate(m, l)
    if trials < 1000:
        raise ValueError("Monte Carlo certificate needs at least 1000 trials")
    rng = np.random.default_rng(rng)
    top = 2**m
    pairs = []
    while len(pairs) < n_pairs:
        a, b = (int(v) for v in rng.integers(0, top, size=2))
        if a != b:
            pairs.append(a ^ b)
    diffs = np.array(pairs, dtype=np.uint64)
    hits = np.zeros(n_pairs, dtype=np.int64)
    pooled = 0
    seeds = rng.integers(0, 2**63, size=trials)
    fresh = rng.integers(1, top, size=trials)
    for s, d_pool in zip(seeds, fresh):
        rows = np.array(expand_rows(int(s), 0, m, l), dtype=np.uint64)
        par = np.bitwise_count(rows[:, None] & diffs[None, :]) & 1
        hits += ~par.any(axis=0)
        pooled += not (np.bitwise_count(rows & np.uint64(d_pool)) & 1).any()
    freq = hits / trials
    bound = 2.0**-l
    limit = bound + 5 * math.sqrt(bound * (1 - bound) / trials)
    mx = float(freq.max())
    details = {"pair_frequencies": freq, "pooled_rate": pooled / trials}
    return CertificateReport(m, l, "monte_carlo", mx, bound, limit, mx <= limit and pooled / trials <= limit, False, n_pairs, trials, details)
