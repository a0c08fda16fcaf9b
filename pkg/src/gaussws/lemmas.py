"""Empirical checks of the underflow analysis for sampled weights.

Each check builds weights, draws noise, casts, and counts events.  The
counts are returned so the CLI can print them and the tests can assert on
them; nothing here decides what a "pass" means except ``ClaimResult``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blockwise import block_absmax, broadcast_blocks
from .fp_emu import FpFormat, cast_fp, exponent_cutoff, lost_mask, max_bt_bound, small_w_threshold, underflow_mask
from .noise import pmf_exact
from .pqt_core import generate_noise, pqt_forward
from .prng import StreamKey

__all__ = [
    "CUTOFF_TABLE",
    "ClaimResult",
    "fp_table_rows",
    "check_fp_table",
    "sample_floor_blocks",
    "underflow_hits",
    "adversarial_underflow_hits",
    "uniform4_noise",
    "uniform4_hits",
    "floor_losses",
    "AnnealingResult",
    "annealing_trial",
    "run_all",
]

# (b_t, exponent bits for w, exponent bits for w_hat, mantissa bits for w_hat), τ = 0
CUTOFF_TABLE = (
    (3, 2, 3, 1),
    (4, 3, 3, 2),
    (5, 3, 3, 3),
    (6, 3, 4, 4),
    (7, 3, 4, 5),
    (8, 4, 4, 6),
    (9, 4, 4, 7),
    (10, 4, 4, 8),
    (11, 4, 4, 9),
    (12, 4, 4, 10),
    (13, 4, 4, 11),
)


@dataclass
class ClaimResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def fp_table_rows(b_values=range(3, 14), tau: int = 0):
    """Computed ``(b_t, e_w, e_w_hat, m_w_hat)`` rows."""
    return tuple((b, *exponent_cutoff(b, tau), b - 2) for b in b_values)


def check_fp_table() -> ClaimResult:
    rows = fp_table_rows()
    bad = [(r, e) for r, e in zip(rows, CUTOFF_TABLE) if r != e]
    detail = f"{len(CUTOFF_TABLE) - len(bad)}/{len(CUTOFF_TABLE)} rows match"
    if bad:
        detail += f"; first mismatch computed {bad[0][0]} vs table {bad[0][1]}"
    return ClaimResult("FP exponent cutoff table", not bad, detail)


def sample_floor_blocks(rng: np.random.Generator, n_blocks: int, b_t: float, tau: int, fmt: FpFormat, b_l: int = 32):
    """``n_blocks`` stacked ``b_l x b_l`` blocks whose entries all sit above the small-weight floor.

    Each block gets its own max in [2**-4, 2**4); magnitudes are
    log-uniform between twice the floor and that max, with random signs.
    """
    W = np.empty((n_blocks * b_l, b_l))
    for i in range(n_blocks):
        top = math.ldexp(1.0, int(rng.integers(-4, 4))) * rng.uniform(1.0, 2.0)
        lo = 2.0 * small_w_threshold(top, b_t, tau, fmt)
        mags = np.exp(rng.uniform(math.log(lo), math.log(top), size=(b_l, b_l)))
        mags.flat[rng.integers(b_l * b_l)] = top
        W[i * b_l : (i + 1) * b_l] = mags * rng.choice([-1.0, 1.0], size=(b_l, b_l))
    return W


def _hits(W, R, b_t, fmt, b_l) -> int:
    bt = np.full(block_absmax(W, b_l).shape, float(b_t))
    w_hat, _ = pqt_forward(W, R, bt, b_l, None)
    return int(underflow_mask(W, w_hat, R, fmt).sum())


def underflow_hits(fmt: FpFormat, b_t: float, n_blocks: int, seed: int = 0, b_l: int = 32) -> tuple[int, int]:
    """Underflow events for Gaussian noise on random blocks above the floor: ``(hits, nonzero R count)``."""
    rng = np.random.default_rng(seed)
    W = sample_floor_blocks(rng, n_blocks, b_t, 0, fmt, b_l)
    R = generate_noise(StreamKey(seed, 0, 0), W.shape, b_l, "gauss-bitwise")
    return _hits(W, R, b_t, fmt, b_l), int(np.count_nonzero(R))


def adversarial_underflow_hits(fmt: FpFormat, b_t: float, seed: int = 0, b_l: int = 32) -> int:
    """A block of ones: every element shares the max's binade, so the noise step is smallest relative to the ulp."""
    W = np.ones((b_l, b_l))
    R = generate_noise(StreamKey(seed, 0, 0), W.shape, b_l, "gauss-bitwise")
    return _hits(W, R, b_t, fmt, b_l)


def uniform4_noise(shape, seed: int = 0) -> np.ndarray:
    """U(-0.5, 0.5) held as a 4-bit signed fraction ``k / 16``, k in -8..7 (smallest nonzero |R| = 2**-4)."""
    u = np.random.default_rng(seed).uniform(-0.5, 0.5, size=shape)
    return np.floor(u * 16.0) / 16.0


def uniform4_hits(fmt: FpFormat, b_t: float, n_blocks: int, seed: int = 0, b_l: int = 32) -> int:
    rng = np.random.default_rng(seed)
    W = sample_floor_blocks(rng, n_blocks, b_t, -4, fmt, b_l)
    return _hits(W, uniform4_noise(W.shape, seed + 1), b_t, fmt, b_l)


def floor_losses(fmt: FpFormat, b_t: float, n: int, seed: int = 0, b_l: int = 32) -> tuple[int, int]:
    """Small weights just above the floor under unit noise: ``(lost above floor, lost below floor)``.

    Below-floor weights are drawn from (floor / 8, floor / 2) so that the
    contrast shows the floor is where the losses begin.
    """
    rng = np.random.default_rng(seed)
    top = 1.0
    thr = small_w_threshold(top, b_t, 0, fmt)
    scale = top * 2.0 ** (1.0 - b_t)
    signs = rng.choice([-1.0, 1.0], size=n)
    R = rng.choice([-1.0, 1.0], size=n)
    above = signs * thr * rng.uniform(1.0 + 2.0**-20, 8.0, size=n)
    below = signs * thr * rng.uniform(0.125, 0.5, size=n)
    return int(lost_mask(above, R * scale, fmt).sum()), int(lost_mask(below, R * scale, fmt).sum())


@dataclass
class AnnealingResult:
    n: int
    nonzero: int
    masked: int
    masked_where_zero: int
    expected: float

    @property
    def frequency(self) -> float:
        return self.masked / self.n

    @property
    def sigma(self) -> float:
        return math.sqrt(self.expected * (1.0 - self.expected) / self.n)


def annealing_trial(n: int, seed: int = 0, b_t: float = 4.0, fmt: FpFormat = FpFormat(3, 2), b_l: int = 32) -> AnnealingResult:
    """Sub-floor weights under Gaussian noise in a narrow format.

    Every block holds one element at 8 (so the block max, and hence the
    noise scale, is fixed) and the rest at magnitudes in [0.035, 2**-4):
    these cast to the smallest subnormal on their own, yet sit within half
    a step of every nonzero noise value of either sign.  Masked means ``cast(w + pqn) == cast(pqn)`` with ``pqn != 0``.
    """
    rng = np.random.default_rng(seed)
    per_block = b_l * b_l - 1
    n_blocks = -(-n // per_block)
    W = rng.uniform(0.035, 2.0**-4, size=(n_blocks * b_l, b_l)) * rng.choice([-1.0, 1.0], size=(n_blocks * b_l, b_l))
    W[::b_l, 0] = 8.0
    sub = np.ones(W.shape, dtype=bool)
    sub[::b_l, 0] = False
    # trim to exactly n sub-floor elements
    flat = sub.reshape(-1)
    flat[np.flatnonzero(flat)[n:]] = False
    R = generate_noise(StreamKey(seed, 0, 0), W.shape, b_l, "gauss-bitwise")
    bt = np.full(block_absmax(W, b_l).shape, float(b_t))
    scale = block_absmax(W, b_l) * np.exp2(1.0 - bt)
    pqn = R * broadcast_blocks(scale, *W.shape, b_l)
    masked = lost_mask(W, pqn, fmt) & sub
    # with R = 0 the element is just cast(w), which must stay nonzero
    zeroed_without_noise = sub & (R == 0) & (cast_fp(W, fmt) == 0)
    return AnnealingResult(
        n=int(sub.sum()),
        nonzero=int(np.count_nonzero(R[sub])),
        masked=int(masked.sum()),
        masked_where_zero=int(zeroed_without_noise.sum()),
        expected=float(pmf_exact().p_nonzero),
    )


def run_all(fmt: FpFormat, trials: int, seed: int = 0) -> list[ClaimResult]:
    """Every check at ``trials`` blocks (underflow bound) / ``trials * 1000`` elements (annealing)."""
    if trials < 100:
        raise ValueError("trials must be >= 100")
    out = [check_fp_table()]
    bound = max_bt_bound(fmt, 0)
    safe_bt, unsafe_bt = bound - 1, bound + 1
    hits, nz = underflow_hits(fmt, safe_bt, trials, seed)
    out.append(ClaimResult(f"noise survives cast, {fmt}, b_t={safe_bt}", hits == 0, f"{hits} underflow events over {nz} nonzero draws"))
    adv = adversarial_underflow_hits(fmt, unsafe_bt, seed)
    out.append(ClaimResult(f"noise lost above bound, {fmt}, b_t={unsafe_bt}", adv > 0, f"{adv} underflow events on a block of ones"))
    u_bound = max_bt_bound(fmt, -4)
    if u_bound - 1 >= 1:
        lo = uniform4_hits(fmt, u_bound - 1, trials, seed)
        hi = uniform4_hits(fmt, u_bound, trials, seed)
        out.append(
            ClaimResult(
                f"4-bit uniform noise, {fmt}, bound b_t<{u_bound}",
                lo == 0 and hi > 0,
                f"b_t={u_bound - 1}: {lo} events, b_t={u_bound}: {hi} events",
            )
        )
    above, below = floor_losses(fmt, safe_bt, trials * 100, seed)
    out.append(
        ClaimResult(
            f"small-weight floor, {fmt}, b_t={safe_bt}, |R|=1",
            above == 0 and below > 0,
            f"{above} weights lost above the floor, {below} below",
        )
    )
    ann = annealing_trial(trials * 1000, seed)
    z = (ann.frequency - ann.expected) / ann.sigma
    out.append(
        ClaimResult(
            "stochastic precision annealing, e3m2, b_t=4",
            abs(z) < 4 and ann.masked_where_zero == 0,
            f"masked {ann.masked}/{ann.n} = {ann.frequency:.5f} (expected {ann.expected:.5f}, z={z:+.2f}); "
            f"{ann.masked_where_zero} masked where R=0",
        )
    )
    return out
