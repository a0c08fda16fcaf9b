"""Vector-wise block quantization does not commute with transposition; square blocks do.

A matmul consumes W grouped along one axis in the forward pass and along
the other in the backward pass, so a vector-wise format stores two
different matrices.
"""

from __future__ import annotations

import numpy as np

from gaussws.blockwise import Quantizer, transpose_discrepancy

rng = np.random.default_rng(0)
W = rng.standard_normal((4, 4))
vector = Quantizer("vector", 2, 4)
square = Quantizer("square", 2, 4)
print(np.array2string(W, precision=4))
print(f"\nvector-wise, blocks of 2: max |Q(W.T).T - Q(W)| = {transpose_discrepancy(W, vector):.4f}")
print(f"square 2x2 blocks:        max |Q(W.T).T - Q(W)| = {transpose_discrepancy(W, square):.4f}")

worst = [transpose_discrepancy(rng.standard_normal((64, 64)), vector) for _ in range(20)]
print(f"\n20 random 64x64 matrices, vector-wise: discrepancy between {min(worst):.3f} and {max(worst):.3f}")
