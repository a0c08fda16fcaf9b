"""Emulation of small floating-point formats and the underflow analysis for PQT.

All values are carried as float64 arrays; ``cast_fp`` snaps them onto the
grid of an ``FpFormat(e, m)`` with round-to-nearest, ties-to-even.  The
layout is IEEE-like: subnormals are present and the all-ones exponent is
reserved for inf/NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FpFormat",
    "BF16",
    "FP16",
    "parse_format",
    "cast_fp",
    "ulp",
    "underflow_mask",
    "lost_mask",
    "effective_pqn",
    "max_bt_bound",
    "exponent_cutoff",
    "small_w_threshold",
]

_FORMAT_RE = re.compile(r"^e(\d+)m(\d+)$")


@dataclass(frozen=True)
class FpFormat:
    """Binary floating-point format with ``exponent_bits`` and ``mantissa_bits``."""

    exponent_bits: int
    mantissa_bits: int

    def __post_init__(self):
        if self.exponent_bits < 2 or self.exponent_bits > 11:
            raise ValueError(f"exponent_bits must be in [2, 11], got {self.exponent_bits}")
        if self.mantissa_bits < 0 or self.mantissa_bits > 52:
            raise ValueError(f"mantissa_bits must be in [0, 52], got {self.mantissa_bits}")

    @property
    def bias(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        """Exponent of the smallest normal binade."""
        return 1 - self.bias

    @property
    def emax(self) -> int:
        return 2**self.exponent_bits - 2 - self.bias

    @property
    def max_finite(self) -> float:
        return math.ldexp(2.0 - math.ldexp(1.0, -self.mantissa_bits), self.emax)

    @property
    def min_normal(self) -> float:
        return math.ldexp(1.0, self.emin)

    @property
    def min_subnormal(self) -> float:
        return math.ldexp(1.0, self.emin - self.mantissa_bits)

    @property
    def total_bits(self) -> int:
        return 1 + self.exponent_bits + self.mantissa_bits

    def __str__(self) -> str:
        return f"e{self.exponent_bits}m{self.mantissa_bits}"


BF16 = FpFormat(8, 7)
FP16 = FpFormat(5, 10)


def parse_format(text: str | FpFormat | None) -> FpFormat | None:
    """Parse ``"e8m7"``-style strings.  ``"none"`` means no cast."""
    if text is None or isinstance(text, FpFormat):
        return text
    text = text.strip().lower()
    if text in ("none", "fp64", ""):
        return None
    match = _FORMAT_RE.match(text)
    if not match:
        raise ValueError(f"bad format {text!r}, expected e<E>m<M> such as 'e8m7'")
    return FpFormat(int(match.group(1)), int(match.group(2)))


def _binade(a: np.ndarray) -> np.ndarray:
    # floor(log2(a)) for a > 0, exact (frexp gives a = f * 2**k with f in [0.5, 1))
    _, k = np.frexp(a)
    return k.astype(np.int64) - 1


def cast_fp(x, fmt: FpFormat | None):
    """Round ``x`` to the nearest value representable in ``fmt`` (ties to even).

    Magnitudes that round past the largest finite value become signed
    infinity.  NaN passes through.  ``fmt=None`` returns ``x`` unchanged.
    """
    if fmt is None:
        return x
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x)
    finite_nz = np.isfinite(a) & (a > 0)
    safe = np.where(finite_nz, a, 1.0)
    exp = np.maximum(_binade(safe), fmt.emin) - fmt.mantissa_bits
    # scaling by a power of two is exact, so rint sees the true quotient
    scaled = np.ldexp(safe, -exp)
    q = np.rint(scaled)
    if fmt.mantissa_bits == 0:
        # no mantissa: the code's last bit belongs to the exponent, so a tie
        # between 2**k and 2**(k+1) goes to whichever has the even biased exponent
        q = np.where((scaled == 1.5) & ((exp + fmt.bias) % 2 == 0), 1.0, q)
    with np.errstate(over="ignore"):  # values past float64 range overflow to inf, which is the answer
        r = np.ldexp(q, exp)
    r = np.where(r > fmt.max_finite, np.inf, r)
    out = np.where(finite_nz, np.copysign(r, x), x)
    return float(out) if scalar else out


def ulp(x, fmt: FpFormat):
    """Spacing of ``fmt`` at ``|x|``; the subnormal step below the normal range."""
    a = np.abs(np.asarray(x, dtype=np.float64))
    if np.any(a == 0):
        raise ValueError("ulp is undefined at zero")
    if not np.all(np.isfinite(a)):
        raise ValueError("ulp needs finite input")
    out = np.ldexp(1.0, np.maximum(_binade(a), fmt.emin) - fmt.mantissa_bits)
    return float(out) if np.ndim(x) == 0 else out


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"shape mismatch: {sorted(shapes)}")


def underflow_mask(w, w_hat, R, fmt: FpFormat) -> np.ndarray:
    """True where noise was drawn (``R != 0``) but casting erased it."""
    _same_shape(w, w_hat, R)
    return (np.asarray(R) != 0) & (cast_fp(np.asarray(w_hat), fmt) == cast_fp(np.asarray(w), fmt))


def lost_mask(w, pqn, fmt: FpFormat) -> np.ndarray:
    """True where the weight itself vanished: ``cast(w + pqn) == cast(pqn)`` with ``pqn != 0``.

    This is the small-weight failure mode (the weight is masked to zero by
    the cast), as opposed to ``underflow_mask`` where the noise vanishes.
    """
    _same_shape(w, pqn)
    w = np.asarray(w, dtype=np.float64)
    pqn = np.asarray(pqn, dtype=np.float64)
    return (pqn != 0) & (w != 0) & (cast_fp(w + pqn, fmt) == cast_fp(pqn, fmt))


def effective_pqn(w, pqn, fmt) -> np.ndarray:
    """Noise that survives the cast: ``cast(w + pqn) - cast(w)``.

    ``fmt`` may be an ``FpFormat`` or any callable quantizer applied to the
    whole matrix (e.g. a block-wise integer fake quantizer).
    """
    _same_shape(w, pqn)
    w = np.asarray(w, dtype=np.float64)
    pqn = np.asarray(pqn, dtype=np.float64)
    quant = fmt if callable(fmt) else (lambda v: cast_fp(v, fmt))
    return quant(w + pqn) - quant(w)


def max_bt_bound(fmt: FpFormat | int, tau: int) -> int:
    """Exclusive upper bound on ``b_t`` for which nonzero noise survives the cast."""
    m = fmt.mantissa_bits if isinstance(fmt, FpFormat) else int(fmt)
    return m + 2 + tau


def exponent_cutoff(b_t: float, tau: int) -> tuple[int, int]:
    """Exponent bits sufficient for ``w`` and for the sampled ``w_hat``."""
    span = -tau + b_t + 1
    if span < 1:
        raise ValueError(f"-tau + b_t + 1 must be >= 1, got {span}")
    return math.ceil(math.log2(span)), math.ceil(math.log2(span + 2))


def small_w_threshold(max_abs_w: float, b_t: float, tau: int, fmt: FpFormat | int) -> float:
    """Magnitude at or below which a weight can be masked to zero by the cast."""
    if max_abs_w <= 0:
        raise ValueError("max_abs_w must be positive")
    m = fmt.mantissa_bits if isinstance(fmt, FpFormat) else int(fmt)
    return math.ldexp(1.0, math.floor(tau + 2 - b_t + math.log2(max_abs_w)) - m)
