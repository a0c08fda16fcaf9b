"""How large can b_t grow before added noise vanishes in the weight format?

For BF16 (e8m7) the bitwise noise survives the cast for b_t up to 8.  Past
that, an adversarial block with a large maximum and small entries loses
noise.  Four-bit uniform noise already loses it at b_t = 5.
"""

from __future__ import annotations

from gaussws.fp_emu import BF16
from gaussws.lemmas import fp_table_rows, adversarial_underflow_hits, underflow_hits, uniform4_hits

print("b_t  e_w  e_w_hat  m_w_hat")
for row in fp_table_rows():
    print("  ".join(f"{v:>3}" for v in row))

print("\nb_t  gaussian hits (random)  gaussian hits (adversarial)  uniform4 hits")
for b_t in range(4, 12):
    hits, _ = underflow_hits(BF16, b_t, 200, seed=b_t)
    print(f"{b_t:>3}  {hits:>22}  {adversarial_underflow_hits(BF16, b_t):>27}  {uniform4_hits(BF16, b_t, 200):>13}")
