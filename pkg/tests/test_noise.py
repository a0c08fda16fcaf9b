from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussws.noise import (
    OP_COUNTS,
    PackedNoise,
    deserialize_packed,
    gen_gauss_bitwise,
    gen_gauss_bitwise_blocks,
    gen_gauss_bitwise_multi,
    gen_gauss_bitwise_stream,
    gen_gauss_boxmuller,
    gen_uniform,
    pack_symbols,
    pmf_exact,
    pmf_rounded_normal,
    serialize_packed,
    unpack_noise,
    unpack_rows,
)
from gaussws.prng import BitStream, StreamKey, random_words
from oracles import binomial_z, normal_cdf

N_BIG = 10**7
symbols = st.lists(st.integers(-2, 2), max_size=200)


@pytest.fixture(scope="module")
def big_bitwise():
    return unpack_noise(gen_gauss_bitwise(N_BIG, StreamKey(2025, 3, 1)))


@pytest.fixture(scope="module")
def big_boxmuller():
    return gen_gauss_boxmuller(N_BIG, StreamKey(2025, 4, 1))


def recipe_oracle(words: np.ndarray, count: int) -> np.ndarray:
    """Scalar transcription of the 16-bit recipe, one lane at a time."""
    out = []
    for word in words.tolist():
        for lane in (word & 0xFFFF, word >> 16):
            r = [(lane >> i) & 1 for i in range(16)]
            m2 = (r[1] | r[2]) & r[3] & r[4] & r[5] & r[6] & r[7] & r[8] & r[9] & r[10]
            m1 = (r[11] | r[12]) & (r[13] | r[14]) & r[15]
            mag = 2 if m2 else (1 if m1 else 0)
            out.append(-mag if (r[0] and mag) else mag)
    return np.array(out[:count], dtype=np.int8)


class TestPmf:
    def test_exact_values(self):
        p = pmf_exact()
        assert p.p_plus2 == Fraction(3, 2048) == p.p_minus2
        assert p.p_plus1 == Fraction(9189, 65536) == p.p_minus1
        assert p.p_zero == Fraction(23483, 32768)
        assert sum(p.as_dict().values()) == 1

    def test_quoted_approximations(self):
        p = pmf_exact()
        assert round(1 / float(p.p_plus2), 1) == 682.7
        assert round(1 / float(p.p_plus1), 1) == 7.1
        assert round(float(p.p_zero), 3) == 0.717

    def test_nonzero_mass(self):
        assert pmf_exact().p_nonzero == Fraction(9285, 32768)

    def test_rounded_normal_reference(self):
        assert math.isclose(pmf_rounded_normal(0), 2 * normal_cdf(1) - 1, rel_tol=1e-12)
        total = sum(pmf_rounded_normal(k) for k in range(-6, 7))
        assert math.isclose(total, 1.0, rel_tol=1e-12)


class TestBitwiseGenerator:
    def test_empty(self):
        p = gen_gauss_bitwise(0, StreamKey(1))
        assert p.count == 0 and p.words.size == 0

    def test_negative_count(self):
        with pytest.raises(ValueError):
            gen_gauss_bitwise(-1, StreamKey(1))

    def test_deterministic(self):
        k = StreamKey(5, 6, 7, 8)
        assert gen_gauss_bitwise(1000, k) == gen_gauss_bitwise(1000, k)

    def test_different_keys_differ(self):
        assert gen_gauss_bitwise(1000, StreamKey(5)) != gen_gauss_bitwise(1000, StreamKey(6))

    @pytest.mark.parametrize("count", [1, 2, 7, 8, 9, 33, 257])
    def test_matches_scalar_recipe(self, count):
        key = StreamKey(31, 2, 9, 4)
        words = random_words(key, -(-count // 2))
        assert np.array_equal(unpack_noise(gen_gauss_bitwise(count, key)), recipe_oracle(words, count))

    def test_frequencies_within_4_sigma(self, big_bitwise):
        counts = np.bincount(big_bitwise.astype(np.int64) + 2, minlength=5)
        assert counts.sum() == N_BIG
        for sym, p in pmf_exact().as_dict().items():
            z = binomial_z(int(counts[sym + 2]), N_BIG, float(p))
            assert abs(z) < 4, (sym, z)

    def test_sign_symmetry(self, big_bitwise):
        for k in (1, 2):
            pos = int(np.sum(big_bitwise == k))
            neg = int(np.sum(big_bitwise == -k))
            # under symmetry pos ~ Binomial(pos + neg, 1/2)
            assert abs(binomial_z(pos, pos + neg, 0.5)) < 4

    def test_min_nonzero_magnitude_is_one(self, big_bitwise):
        nz = np.abs(big_bitwise[big_bitwise != 0])
        assert nz.min() == 1 and nz.max() == 2

    def test_no_float_operations(self):
        before = dict(OP_COUNTS)
        gen_gauss_bitwise(100_000, StreamKey(3))
        assert dict(OP_COUNTS) == before

    def test_sixteen_bits_per_element(self):
        stream = BitStream(StreamKey(12), counter=5)
        for count in (0, 1, 2, 10, 1001):
            _, after = gen_gauss_bitwise_stream(count, stream)
            assert 32 * (after.counter - stream.counter) == 16 * count + 16 * (count % 2)

    def test_stream_continuation(self):
        key = StreamKey(13)
        a, s = gen_gauss_bitwise_stream(100, BitStream(key))
        b, _ = gen_gauss_bitwise_stream(100, s)
        whole = unpack_noise(gen_gauss_bitwise(200, key))
        assert np.array_equal(np.concatenate([unpack_noise(a), unpack_noise(b)]), whole)

    def test_multi_and_blocks_paths(self):
        key = StreamKey(14, 1, 2)
        blocks = [0, 3, 17]
        rows = [gen_gauss_bitwise(50, key.for_block(b)).words for b in blocks]
        assert np.array_equal(gen_gauss_bitwise_multi(50, [key.for_block(b) for b in blocks]), np.stack(rows))
        assert np.array_equal(gen_gauss_bitwise_blocks(50, key, blocks), np.stack(rows))

    def test_packed_storage(self):
        for n in (1, 8, 9, 1000):
            p = gen_gauss_bitwise(n, StreamKey(1))
            assert p.words.size == -(-n // 8)
            assert p.nbytes == 4 * -(-n // 8)

    def test_reserved_bit_clear_and_tail_zero(self):
        p = gen_gauss_bitwise(13, StreamKey(2))
        raw = p.words.view(np.uint8)
        nib = np.stack([raw & 0xF, raw >> 4], axis=1).ravel()
        assert np.all(nib & 0x4 == 0)
        assert np.all(nib[13:] == 0)


class TestBoxMuller:
    def test_deterministic(self):
        k = StreamKey(8)
        assert np.array_equal(gen_gauss_boxmuller(999, k), gen_gauss_boxmuller(999, k))

    def test_empty(self):
        assert gen_gauss_boxmuller(0, StreamKey(0)).size == 0

    def test_zero_and_one_frequencies(self, big_boxmuller):
        p0 = 2 * normal_cdf(1) - 1
        p1 = 2 * (normal_cdf(3) - normal_cdf(1))
        assert abs(binomial_z(int(np.sum(big_boxmuller == 0)), N_BIG, p0)) < 4
        assert abs(binomial_z(int(np.sum(np.abs(big_boxmuller) == 1)), N_BIG, p1)) < 4

    def test_full_support_tail(self, big_boxmuller):
        # Pr(|R| >= 3) ~ 5.7e-7, so around 6 expected in 1e7 draws
        assert np.sum(np.abs(big_boxmuller) >= 2) > 0
        p3 = 2 * (1 - normal_cdf(5))
        assert abs(binomial_z(int(np.sum(np.abs(big_boxmuller) >= 3)), N_BIG, p3)) < 4

    def test_counts_transcendentals(self):
        before = OP_COUNTS["log"]
        gen_gauss_boxmuller(1000, StreamKey(1))
        assert OP_COUNTS["log"] - before == 500


class TestUniform:
    def test_open_interval_and_mean(self):
        u = gen_uniform(N_BIG, StreamKey(77))
        assert u.min() > -0.5 and u.max() < 0.5
        sigma = (1 / math.sqrt(12)) / math.sqrt(N_BIG)
        assert abs(u.mean()) < 4 * sigma

    def test_deterministic(self):
        k = StreamKey(9)
        assert np.array_equal(gen_uniform(100, k), gen_uniform(100, k))

    def test_negative_count(self):
        with pytest.raises(ValueError):
            gen_uniform(-3, StreamKey(0))


class TestCodec:
    def test_round_trip_example(self):
        seq = [-2, -1, 0, 1, 2, 0, 0, 0]
        assert unpack_noise(pack_symbols(seq)).tolist() == seq

    @pytest.mark.parametrize(
        "nibble,value", [(0b1010, -2), (0b1001, -1), (0b1000, 0), (0b0000, 0), (0b0001, 1), (0b0010, 2)]
    )
    def test_nibble_decoding(self, nibble, value):
        p = PackedNoise(np.array([nibble], dtype=np.uint32), 1)
        assert unpack_noise(p).tolist() == [value]

    def test_malformed_nibble(self):
        p = PackedNoise(np.array([0b0011], dtype=np.uint32), 1)
        with pytest.raises(ValueError):
            unpack_noise(p)

    @pytest.mark.parametrize("sym", [-2, -1, 0, 1, 2])
    @pytest.mark.parametrize("pos", range(8))
    def test_every_symbol_every_position(self, sym, pos):
        seq = [0] * 8
        seq[pos] = sym
        p = pack_symbols(seq)
        assert p.words.size == 1
        expected = (abs(sym) | (8 if sym < 0 else 0)) << (4 * pos)
        assert int(p.words[0]) == expected
        assert unpack_noise(p).tolist() == seq

    @given(symbols)
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, seq):
        p = pack_symbols(seq)
        assert p.words.size == -(-len(seq) // 8)
        assert unpack_noise(p).tolist() == seq

    @given(symbols, st.data())
    @settings(max_examples=100, deadline=None)
    def test_slices(self, seq, data):
        start = data.draw(st.integers(0, len(seq)))
        length = data.draw(st.integers(0, len(seq) - start))
        assert unpack_noise(pack_symbols(seq), start, length).tolist() == seq[start : start + length]

    def test_slice_out_of_range(self):
        p = pack_symbols([1, 2, 0])
        with pytest.raises(IndexError):
            unpack_noise(p, 2, 2)
        with pytest.raises(IndexError):
            unpack_noise(p, -1, 1)

    def test_rejects_out_of_alphabet(self):
        with pytest.raises(ValueError):
            pack_symbols([3])

    def test_unpack_rows_matches_unpack_noise(self):
        key = StreamKey(4)
        p = gen_gauss_bitwise(37, key)
        assert np.array_equal(unpack_rows(p.words[None, :], 37)[0], unpack_noise(p))

    def test_large_random_round_trip(self):
        seq = np.random.default_rng(0).integers(-2, 3, size=10**6)
        p = pack_symbols(seq)
        assert p.words.size == 10**6 // 8
        assert np.array_equal(unpack_noise(p), seq)


class TestSerialization:
    def test_round_trip(self):
        p = gen_gauss_bitwise(29, StreamKey(6))
        blob = serialize_packed(p)
        assert len(blob) == 16 + 4 * 4
        assert blob[:4] == b"PQN1"
        q = deserialize_packed(blob, key=p.key)
        assert q == p

    def test_little_endian_layout(self):
        p = pack_symbols([1, 2])
        blob = serialize_packed(p)
        assert blob[16:] == bytes([0x21, 0, 0, 0])
        assert blob[4:16] == (1).to_bytes(4, "little") + (2).to_bytes(8, "little")

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda b: b[:10],
            lambda b: b"XXXX" + b[4:],
            lambda b: b[:4] + (2).to_bytes(4, "little") + b[8:],
            lambda b: b[:-1],
            lambda b: b + b"\0\0\0\0",
        ],
        ids=["short-header", "magic", "version", "truncated", "trailing"],
    )
    def test_rejects_corrupt(self, mutate):
        blob = serialize_packed(gen_gauss_bitwise(20, StreamKey(1)))
        with pytest.raises(ValueError):
            deserialize_packed(mutate(blob))
