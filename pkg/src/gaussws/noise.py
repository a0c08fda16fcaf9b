"""Noise sources for pseudo-quantization and the 4-bit packed symbol codec.

``gen_gauss_bitwise`` draws an approximation of round(N(0, 1) / 2) from raw
PRNG bits with and/or/shift only.  Each element eats one 16-bit lane of a
32-bit word: bit 0 is the sign, bits 1..15 feed two Bernoulli events

    M2 = (r1 | r2) & r3 & ... & r10      Pr = 3/4 * 2**-8
    M1 = (r11 | r12) & (r13 | r14) & r15  Pr = 9/32

and ``|R| = 2 if M2 else 1 if M1 else 0``.  Symbols are stored sign-magnitude,
one nibble each (bit 3 sign, bits 1..0 magnitude), eight per 32-bit word.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .prng import BitStream, StreamKey, random_words, random_words_blocks, random_words_multi

__all__ = [
    "NoisePmf",
    "PackedNoise",
    "OP_COUNTS",
    "pmf_exact",
    "pmf_rounded_normal",
    "gen_gauss_bitwise",
    "gen_gauss_bitwise_stream",
    "gen_gauss_bitwise_multi",
    "gen_gauss_bitwise_blocks",
    "unpack_rows",
    "gen_gauss_boxmuller",
    "gen_uniform",
    "pack_symbols",
    "unpack_noise",
    "serialize_packed",
    "deserialize_packed",
]

# element counts of float/transcendental evaluations, per operation name;
# the bitwise generator must leave this untouched
OP_COUNTS: Counter = Counter()

_LANES = np.uint32(0x00010001)


def _count(name: str, arr) -> None:
    OP_COUNTS[name] += int(np.size(arr))


@dataclass(frozen=True)
class NoisePmf:
    p_plus2: Fraction
    p_plus1: Fraction
    p_zero: Fraction
    p_minus1: Fraction
    p_minus2: Fraction

    def as_dict(self) -> dict[int, Fraction]:
        return {-2: self.p_minus2, -1: self.p_minus1, 0: self.p_zero, 1: self.p_plus1, 2: self.p_plus2}

    @property
    def p_nonzero(self) -> Fraction:
        return 1 - self.p_zero


def pmf_exact() -> NoisePmf:
    """Exact distribution produced by ``gen_gauss_bitwise``."""
    p2 = Fraction(3, 4) * Fraction(1, 2**9)
    p1 = Fraction(3, 4) ** 2 * Fraction(1, 4) * (1 - 2 * p2)
    p0 = 1 - 2 * p1 - 2 * p2
    return NoisePmf(p2, p1, p0, p1, p2)


def pmf_rounded_normal(k: int) -> float:
    """Pr(round(N(0,1)/2) = k) for the exact rounded normal."""
    from math import erf, sqrt

    cdf = lambda x: 0.5 * (1.0 + erf(x / sqrt(2.0)))  # noqa: E731
    return cdf(2 * k + 1) - cdf(2 * k - 1)


@dataclass(frozen=True, eq=False)
class PackedNoise:
    words: np.ndarray  # uint32, ceil(count / 8) entries
    count: int
    key: StreamKey | None = None

    @property
    def nbytes(self) -> int:
        return self.words.size * 4

    def __eq__(self, other):
        if not isinstance(other, PackedNoise):
            return NotImplemented
        return self.count == other.count and self.key == other.key and np.array_equal(self.words, other.words)

    __hash__ = None


def _lane_nibbles(x: np.ndarray) -> np.ndarray:
    y = x >> 1
    m2 = (y | (y >> 1)) & (y >> 2) & (y >> 3) & (y >> 4) & (y >> 5) & (y >> 6) & (y >> 7) & (y >> 8) & (y >> 9)
    m1 = ((y >> 10) | (y >> 11)) & ((y >> 12) | (y >> 13)) & (y >> 14)
    # lane 0 nibble lands in bits 0..3, lane 1 nibble in bits 16..19
    return ((x & _LANES) << 3) | ((m2 & _LANES) << 1) | (m1 & ~m2 & _LANES)


def _words_from_lanes(nib: np.ndarray, count: int) -> np.ndarray:
    # one byte per source word: even element low nibble, odd element high nibble
    packed = ((nib & 0xF) | ((nib >> 12) & 0xF0)).astype(np.uint8)
    n_words = (count + 7) >> 3
    buf = np.zeros(packed.shape[:-1] + (n_words * 4,), dtype=np.uint8)
    buf[..., : packed.shape[-1]] = packed
    if count & 1:
        buf[..., count >> 1] &= 0x0F
    return buf.view("<u4").astype(np.uint32, copy=False)


def gen_gauss_bitwise(count: int, key: StreamKey) -> PackedNoise:
    if count < 0:
        raise ValueError("count must be non-negative")
    x = random_words(key, (count + 1) >> 1)
    return PackedNoise(_words_from_lanes(_lane_nibbles(x), count), count, key)


def gen_gauss_bitwise_stream(count: int, stream: BitStream) -> tuple[PackedNoise, BitStream]:
    """Draw from ``stream``'s current counter; the returned stream sits after the words consumed."""
    if count < 0:
        raise ValueError("count must be non-negative")
    n_words = (count + 1) >> 1
    x = random_words(stream.key, n_words, stream.counter)
    packed = PackedNoise(_words_from_lanes(_lane_nibbles(x), count), count, stream.key)
    return packed, BitStream(stream.key, stream.counter + n_words)


def gen_gauss_bitwise_multi(count: int, keys) -> np.ndarray:
    """Packed words for several keys at once; row ``i`` equals ``gen_gauss_bitwise(count, keys[i]).words``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    x = random_words_multi(keys, (count + 1) >> 1)
    return _words_from_lanes(_lane_nibbles(x), count)


def gen_gauss_bitwise_blocks(count: int, key: StreamKey, blocks) -> np.ndarray:
    """Like ``gen_gauss_bitwise_multi`` for the keys ``key.for_block(b)``, without building them."""
    if count < 0:
        raise ValueError("count must be non-negative")
    x = random_words_blocks(key, blocks, (count + 1) >> 1)
    return _words_from_lanes(_lane_nibbles(x), count)


def unpack_rows(words: np.ndarray, count: int) -> np.ndarray:
    """Decode the first ``count`` symbols of every row of packed words."""
    raw = np.ascontiguousarray(words, dtype="<u4").view(np.uint8)
    nib = np.empty(raw.shape[:-1] + (raw.shape[-1] * 2,), dtype=np.uint8)
    nib[..., 0::2] = raw & 0x0F
    nib[..., 1::2] = raw >> 4
    nib = nib[..., :count]
    mag = (nib & 0x7).astype(np.int8)
    if np.any(mag > 2):
        raise ValueError("malformed noise nibble")
    return np.where(nib & 0x8, -mag, mag).astype(np.int8)


def _uniform_open(key: StreamKey, n: int, counter: int = 0) -> np.ndarray:
    # (u + 1/2) / 2**32: strictly inside (0, 1)
    u = random_words(key, n, counter).astype(np.float64)
    _count("div", u)
    return (u + 0.5) / 4294967296.0


def gen_gauss_boxmuller(count: int, key: StreamKey) -> np.ndarray:
    """round(N(0,1) / 2) via the Box-Muller transform, as int8 symbols."""
    if count < 0:
        raise ValueError("count must be non-negative")
    pairs = -(-count // 2)
    u = _uniform_open(key, 2 * pairs)
    u1, u2 = u[0::2], u[1::2]
    _count("log", u1)
    _count("sqrt", u1)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    _count("cos", theta)
    _count("sin", theta)
    z = np.empty(2 * pairs)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return np.rint(z[:count] * 0.5).astype(np.int8)


def gen_uniform(count: int, key: StreamKey) -> np.ndarray:
    """I.i.d. U(-0.5, 0.5) values, strictly inside the open interval."""
    if count < 0:
        raise ValueError("count must be non-negative")
    return _uniform_open(key, count) - 0.5


def pack_symbols(symbols, key: StreamKey | None = None) -> PackedNoise:
    """Encode integers in {-2..2} as sign-magnitude nibbles."""
    s = np.asarray(symbols).astype(np.int64).ravel()
    if s.size and (s.min() < -2 or s.max() > 2):
        raise ValueError("symbols must lie in {-2, -1, 0, 1, 2}")
    nib = (np.abs(s) | np.where(s < 0, 8, 0)).astype(np.uint8)
    n = s.size
    buf = np.zeros(-(-n // 8) * 8, dtype=np.uint8)
    buf[:n] = nib
    pairs = buf[0::2] | (buf[1::2] << 4)
    return PackedNoise(pairs.view("<u4").astype(np.uint32, copy=False), n, key)


def unpack_noise(p: PackedNoise, start: int = 0, length: int | None = None) -> np.ndarray:
    """Decode ``length`` symbols from position ``start`` to int8 values."""
    if length is None:
        length = p.count - start
    if start < 0 or length < 0 or start + length > p.count:
        raise IndexError(f"slice [{start}, {start + length}) outside 0..{p.count}")
    raw = p.words.astype("<u4").view(np.uint8)
    lo_byte, hi_byte = start // 2, -(-(start + length) // 2)
    b = raw[lo_byte:hi_byte]
    nib = np.empty(b.size * 2, dtype=np.uint8)
    nib[0::2] = b & 0x0F
    nib[1::2] = b >> 4
    off = start - 2 * lo_byte
    nib = nib[off : off + length]
    mag = nib & 0x7
    if np.any(mag > 2):
        raise ValueError("malformed noise nibble")
    mag = mag.astype(np.int8)
    return np.where(nib & 0x8, -mag, mag).astype(np.int8)


_HEADER = struct.Struct("<4sIQ")
_MAGIC = b"PQN1"


def serialize_packed(p: PackedNoise) -> bytes:
    """16-byte header (magic, u32 version 1, u64 count) then the words, little-endian."""
    return _HEADER.pack(_MAGIC, 1, p.count) + np.asarray(p.words, dtype="<u4").tobytes()


def deserialize_packed(data: bytes, key: StreamKey | None = None) -> PackedNoise:
    if len(data) < _HEADER.size:
        raise ValueError("truncated PackedNoise header")
    magic, version, count = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"not a PackedNoise v1 blob (magic {magic!r}, version {version})")
    n_words = -(-count // 8)
    body = data[_HEADER.size :]
    if len(body) != 4 * n_words:
        raise ValueError(f"expected {4 * n_words} payload bytes for {count} symbols, got {len(body)}")
    return PackedNoise(np.frombuffer(body, dtype="<u4").astype(np.uint32), count, key)
