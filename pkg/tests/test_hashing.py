import hashlib
import struct
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from dxchange.errors import EncodingOverflow
from dxchange.hashing import (
    HashChain,
    all_sequences,
    block_value,
    block_values,
    expand_rows,
    extend,
    hash_index,
    hash_indices,
    hash_sequence,
    index_to_sequence,
    input_bits_for,
    sequence_index,
    split_blocks,
    two_universal_certificate,
)

seeds = st.integers(0, 2**64 - 1)


def test_row_expansion_known_answer():
    digest = hashlib.shake_256(b"DXHC" + struct.pack(">QII", 1, 0, 16)).digest(6)
    expect = tuple(int.from_bytes(digest[2 * j:2 * j + 2], "big") for j in range(3))
    assert expand_rows(1, 0, 16, 3) == expect == (46906, 55120, 36127)


@given(seeds, st.integers(0, 5), st.integers(1, 40), st.integers(0, 6))
def test_rows_fit_width(seed, r, m, count):
    rows = expand_rows(seed, r, m, count)
    assert len(rows) == count
    assert all(0 <= v < 2**m for v in rows)
    assert rows == expand_rows(seed, r, m, count)


@given(seeds, st.integers(1, 30), st.lists(st.integers(1, 6), min_size=1, max_size=4), st.integers(1, 6), st.data())
def test_extension_preserves_prefix(seed, m, blocks, more, data):
    idx = data.draw(st.integers(0, 2**m - 1))
    base = HashChain(seed, m, tuple(blocks))
    longer = extend(base, more)
    assert longer.block_sizes[:-1] == base.block_sizes
    assert hash_index(longer, idx) >> more == hash_index(base, idx)
    assert longer.prefix(len(blocks)) == base


@given(seeds, st.integers(1, 30), st.lists(st.integers(1, 8), min_size=1, max_size=4), st.data())
def test_linearity(seed, m, blocks, data):
    a = data.draw(st.integers(0, 2**m - 1))
    b = data.draw(st.integers(0, 2**m - 1))
    ch = HashChain(seed, m, tuple(blocks))
    assert hash_index(ch, a ^ b) == hash_index(ch, a) ^ hash_index(ch, b)
    assert hash_index(ch, 0) == 0


@given(seeds, st.integers(1, 20), st.lists(st.integers(1, 8), min_size=1, max_size=3))
def test_vectorized_matches_scalar(seed, m, blocks):
    ch = HashChain(seed, m, tuple(blocks))
    idx = np.random.default_rng(seed % 1000).integers(0, 2**m, size=30, dtype=np.uint64)
    vec = hash_indices(ch, idx)
    assert [int(v) for v in vec] == [hash_index(ch, int(i)) for i in idx]
    for r in range(ch.rounds):
        bv = block_values(ch, idx, r)
        assert [int(v) for v in bv] == [block_value(ch, int(i), r) for i in idx]
    for i in idx[:5]:
        h = hash_index(ch, int(i))
        assert split_blocks(ch, h) == [block_value(ch, int(i), r) for r in range(ch.rounds)]


def test_matrix_agrees_with_hash():
    ch = HashChain(7, 10, (3, 2))
    A = ch.matrix()
    for idx in (1, 5, 513, 1023):
        bits = np.array([(idx >> (9 - j)) & 1 for j in range(10)])
        out = (A @ bits) % 2
        assert int("".join(map(str, out)), 2) == hash_index(ch, idx)


def test_overflow_and_validation():
    ch = HashChain(1, 4, (2,))
    with pytest.raises(EncodingOverflow):
        hash_index(ch, 16)
    with pytest.raises(EncodingOverflow):
        hash_indices(ch, [3, 17])
    with pytest.raises(ValueError):
        extend(ch, 0)
    with pytest.raises(ValueError):
        extend(ch, 1.5)


def test_zero_rows_hook():
    ch = HashChain(3, 8, (4,), zero_rows=True)
    assert {hash_index(ch, i) for i in range(256)} == {0}


@given(st.integers(1, 4), st.integers(1, 6), st.data())
def test_sequence_index_round_trip(a, n, data):
    a = a + 1
    seq = data.draw(st.lists(st.integers(0, a - 1), min_size=n, max_size=n))
    idx = sequence_index(seq, a)
    assert idx < a**n
    assert idx.bit_length() <= input_bits_for(n, a)
    assert list(index_to_sequence(idx, n, a)) == seq


def test_all_sequences_order():
    seqs = all_sequences(3, 3)
    assert len(seqs) == 27
    assert [sequence_index(s, 3) for s in seqs] == list(range(27))
    ch = HashChain(11, input_bits_for(3, 3), (4,))
    assert hash_sequence(ch, seqs[14], 3) == hash_index(ch, 14)


def test_exact_certificate_matches_bruteforce():
    rep = two_universal_certificate(3, 2)
    assert rep.mode == "exact" and rep.passed
    assert rep.max_collision == 0.25
    assert rep.details["matrix_enumeration_max"] == 0.25
    for a in range(8):
        for b in range(a + 1, 8):
            assert oracles.collision_probability_bruteforce(3, 2, a, b) == Fraction(1, 4)


@pytest.mark.parametrize("m, l", [(4, 3), (6, 2), (10, 5)])
def test_exact_certificate_family(m, l):
    rep = two_universal_certificate(m, l)
    assert rep.passed
    assert np.allclose(rep.details["per_difference"], 2.0**-l)


def test_monte_carlo_certificate_small():
    rep = two_universal_certificate(20, 6, trials=4000, rng=3)
    assert rep.mode == "monte_carlo"
    assert rep.passed
    assert rep.limit > rep.bound == 2.0**-6


def test_certificate_degenerate():
    rep = two_universal_certificate(5, 0)
    assert rep.degenerate and rep.max_collision == 1.0
