"""Gaussian weight sampling for pseudo-quantization training, at desk scale.

The package emulates narrow floating-point formats, draws a rounded
Gaussian noise from raw PRNG bits, applies it block-wise to weight
matrices, and trains toy models with it.
"""

from .fp_emu import BF16, FP16, FpFormat, cast_fp, parse_format
from .noise import PackedNoise, gen_gauss_bitwise, pack_symbols, pmf_exact, unpack_noise
from .pqt_core import PqtConfig, PqtLayerState, pqt_backward, pqt_forward, sample_weights
from .prng import StreamKey

__version__ = "0.1.0"

__all__ = [
    "BF16",
    "FP16",
    "FpFormat",
    "cast_fp",
    "parse_format",
    "PackedNoise",
    "gen_gauss_bitwise",
    "pack_symbols",
    "pmf_exact",
    "unpack_noise",
    "PqtConfig",
    "PqtLayerState",
    "pqt_forward",
    "pqt_backward",
    "sample_weights",
    "StreamKey",
]
