"""Square-block statistics and integer fake quantizers.

A block grid is a plain 2-D array of shape ``(ceil(rows/b_l), ceil(cols/b_l))``;
edge blocks cover whatever rows/cols remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "grid_shape",
    "block_absmax",
    "block_sum",
    "broadcast_blocks",
    "block_slices",
    "round_half_away",
    "fake_quant_vectorwise",
    "fake_quant_squareblock",
    "Quantizer",
    "transpose_discrepancy",
]


def grid_shape(rows: int, cols: int, b_l: int) -> tuple[int, int]:
    if b_l < 1:
        raise ValueError("block size must be >= 1")
    return -(-rows // b_l), -(-cols // b_l)


def _tiles(W: np.ndarray, b_l: int, fill: float) -> np.ndarray:
    rows, cols = W.shape
    br, bc = grid_shape(rows, cols, b_l)
    if (br * b_l, bc * b_l) != (rows, cols):
        padded = np.full((br * b_l, bc * b_l), fill, dtype=W.dtype)
        padded[:rows, :cols] = W
        W = padded
    return W.reshape(br, b_l, bc, b_l)


def block_absmax(W, b_l: int = 32) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or min(W.shape) < 1:
        raise ValueError("expected a non-empty matrix")
    return np.abs(_tiles(W, b_l, 0.0)).max(axis=(1, 3))


def block_sum(W, b_l: int = 32) -> np.ndarray:
    """Per-block sum; edge blocks sum only the elements present."""
    W = np.asarray(W, dtype=np.float64)
    return _tiles(W, b_l, 0.0).sum(axis=(1, 3))


def broadcast_blocks(G, rows: int, cols: int, b_l: int = 32) -> np.ndarray:
    G = np.asarray(G)
    if G.shape != grid_shape(rows, cols, b_l):
        raise ValueError(f"grid shape {G.shape} does not match {(rows, cols)} with b_l={b_l}")
    return np.repeat(np.repeat(G, b_l, axis=0), b_l, axis=1)[:rows, :cols]


def block_slices(rows: int, cols: int, b_l: int):
    """Yield ``(block_index, I, J, row_slice, col_slice)`` in row-major block order."""
    br, bc = grid_shape(rows, cols, b_l)
    for I in range(br):
        for J in range(bc):
            yield I * bc + J, I, J, slice(I * b_l, min((I + 1) * b_l, rows)), slice(J * b_l, min((J + 1) * b_l, cols))


def round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _quantize_with_scale(W, absmax, int_bits):
    qmax = 2 ** (int_bits - 1) - 1
    scale = absmax / qmax
    safe = np.where(scale > 0, scale, 1.0)
    return np.where(scale > 0, round_half_away(W / safe) * safe, W)


def fake_quant_vectorwise(W, axis: str, block: int, int_bits: int) -> np.ndarray:
    """Symmetric INT fake quantization with one scale per ``block``-long vector.

    ``axis="col"`` groups runs down each column (along axis 0, the inner
    dimension of ``A @ W``); ``axis="row"`` groups runs along each row.
    """
    if int_bits < 2:
        raise ValueError("int_bits must be >= 2")
    W = np.asarray(W, dtype=np.float64)
    if axis == "row":
        return fake_quant_vectorwise(W.T, "col", block, int_bits).T
    if axis != "col":
        raise ValueError(f"axis must be 'row' or 'col', got {axis!r}")
    rows, cols = W.shape
    nb = -(-rows // block)
    padded = np.zeros((nb * block, cols))
    padded[:rows] = W
    absmax = np.abs(padded.reshape(nb, block, cols)).max(axis=1)
    absmax = np.repeat(absmax, block, axis=0)[:rows]
    return _quantize_with_scale(W, absmax, int_bits)


def fake_quant_squareblock(W, b_l: int, int_bits: int) -> np.ndarray:
    if int_bits < 2:
        raise ValueError("int_bits must be >= 2")
    W = np.asarray(W, dtype=np.float64)
    absmax = broadcast_blocks(block_absmax(W, b_l), *W.shape, b_l)
    return _quantize_with_scale(W, absmax, int_bits)


@dataclass(frozen=True)
class Quantizer:
    kind: str  # "square" or "vector"
    block: int = 32
    int_bits: int = 4
    axis: str = "col"

    def __call__(self, W):
        if self.kind == "square":
            return fake_quant_squareblock(W, self.block, self.int_bits)
        if self.kind == "vector":
            return fake_quant_vectorwise(W, self.axis, self.block, self.int_bits)
        raise ValueError(f"unknown quantizer kind {self.kind!r}")


def transpose_discrepancy(W, quantizer: Quantizer) -> float:
    """``max |quant(W).T - quant(W.T)|``: zero iff the quantizer commutes with transpose on W."""
    W = np.asarray(W, dtype=np.float64)
    return float(np.max(np.abs(quantizer(W).T - quantizer(W.T)), initial=0.0))
