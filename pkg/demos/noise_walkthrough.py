"""Draw bitwise Gaussian noise, compare it with a rounded normal, and pack it.

Run with ``python3 demos/noise_walkthrough.py``.
"""

from __future__ import annotations

import time

import numpy as np

from gaussws.noise import gen_gauss_boxmuller, gen_gauss_bitwise, pmf_exact, pmf_rounded_normal, unpack_noise
from gaussws.prng import StreamKey

N = 2_000_000

t0 = time.perf_counter()
packed = gen_gauss_bitwise(N, StreamKey(42))
t_bits = time.perf_counter() - t0
symbols = unpack_noise(packed)

t0 = time.perf_counter()
gen_gauss_boxmuller(N, StreamKey(42))
t_bm = time.perf_counter() - t0

print(f"{N} draws: bitwise {t_bits * 1e3:.0f} ms, Box-Muller {t_bm * 1e3:.0f} ms")
print(f"storage: {packed.nbytes} bytes, i.e. {8 * packed.nbytes / N:.1f} bits per element\n")

counts = np.bincount(symbols.astype(np.int64) + 2, minlength=5)
print(" R   exact pmf   observed   round(N(0,1))")
for k, p in pmf_exact().as_dict().items():
    print(f"{k:+d}   {float(p):.5f}     {counts[k + 2] / N:.5f}    {pmf_rounded_normal(k):.5f}")
print(f"\nPr(R != 0) = {pmf_exact().p_nonzero} = {float(pmf_exact().p_nonzero):.5f}")
print(f"sample std {symbols.std():.4f}")
