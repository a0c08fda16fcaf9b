"""Counter-based bit streams keyed by (root seed, layer, step, block).

Every 32-bit output is a pure function of the key and a counter, so the
same key regenerates the same bits in any order.  The mixer is the
SplitMix64 finalizer (Steele, Lea & Flood 2014; constants from Stafford's
"Mix13"), and each word is the high half of one mixed 64-bit value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

__all__ = [
    "StreamKey",
    "BitStream",
    "mix64",
    "next_u32",
    "derive_layer_key",
    "advance_step",
    "random_words",
    "random_words_multi",
    "random_words_blocks",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# domain separators so that (layer=1, step=0) and (layer=0, step=1) hash apart
_TAG_LAYER = 0x6C61796572000001
_TAG_STEP = 0x7374657000000002
_TAG_BLOCK = 0x626C6F636B000003


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class StreamKey:
    root_seed: int
    layer_index: int = 0
    step: int = 0
    block_index: int = 0

    def __post_init__(self):
        if not 0 <= self.root_seed <= MASK64:
            raise ValueError("root_seed must fit in 64 bits")
        if min(self.layer_index, self.step, self.block_index) < 0:
            raise ValueError("key fields must be non-negative")

    @cached_property
    def step_material(self) -> int:
        """Digest of (root, layer, step); blocks branch off this."""
        h = mix64(self.root_seed + GOLDEN)
        h = mix64(h ^ mix64(self.layer_index + _TAG_LAYER))
        return mix64(h ^ mix64(self.step + _TAG_STEP))

    @cached_property
    def material(self) -> int:
        """64-bit digest of all four fields; the stream is a function of this."""
        return mix64(self.step_material ^ mix64(self.block_index + _TAG_BLOCK))

    def for_block(self, block_index: int) -> StreamKey:
        return replace(self, block_index=block_index)

    def at_step(self, step: int) -> StreamKey:
        return replace(self, step=step)


@dataclass(frozen=True)
class BitStream:
    key: StreamKey
    counter: int = 0


def random_words(key: StreamKey, n: int, counter: int = 0) -> np.ndarray:
    """``n`` consecutive 32-bit words of ``key``'s stream, starting at ``counter``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    c = np.arange(counter + 1, counter + 1 + n, dtype=np.uint64)
    z = np.uint64(key.material) + c * np.uint64(GOLDEN)
    return (_mix64_array(z) >> np.uint64(32)).astype(np.uint32)


def random_words_multi(keys, n: int, counter: int = 0) -> np.ndarray:
    """Row ``i`` equals ``random_words(keys[i], n, counter)``."""
    mat = np.array([k.material for k in keys], dtype=np.uint64)
    c = np.arange(counter + 1, counter + 1 + n, dtype=np.uint64)
    z = mat[:, None] + c[None, :] * np.uint64(GOLDEN)
    return (_mix64_array(z) >> np.uint64(32)).astype(np.uint32)


def random_words_blocks(key: StreamKey, blocks, n: int, counter: int = 0) -> np.ndarray:
    """Row ``i`` equals ``random_words(key.for_block(blocks[i]), n, counter)``."""
    b = np.asarray(blocks, dtype=np.uint64)
    mat = _mix64_array(np.uint64(key.step_material) ^ _mix64_array(b + np.uint64(_TAG_BLOCK)))
    c = np.arange(counter + 1, counter + 1 + n, dtype=np.uint64)
    z = mat[:, None] + c[None, :] * np.uint64(GOLDEN)
    return (_mix64_array(z) >> np.uint64(32)).astype(np.uint32)


def next_u32(stream: BitStream) -> tuple[int, BitStream]:
    z = (stream.key.material + (stream.counter + 1) * GOLDEN) & MASK64
    return mix64(z) >> 32, BitStream(stream.key, stream.counter + 1)


def derive_layer_key(root_seed: int, layer_index: int) -> StreamKey:
    if layer_index < 0:
        raise ValueError("layer_index must be >= 0")
    return StreamKey(root_seed, layer_index, 0, 0)


def advance_step(key: StreamKey) -> StreamKey:
    return replace(key, step=key.step + 1)
