"""Gaussian weight sampling: the PQT forward/backward operator and bitwidth bookkeeping.

Forward::

    w_hat = cast(w + R * broadcast(absmax_block(w) * 2**(1 - b_t)))
    b_t   = b_target + b_i * (b_init - b_target)

Backward treats the block max as a constant, so ``dL/dw = dL/dw_hat`` and
``dL/db_t = -ln2 * absmax * 2**(1 - b_t) * sum_block(dL/dw_hat * R)``.
R is never stored between the two passes; backward regenerates it from the
same (layer, step, block) keys used in forward.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .blockwise import block_absmax, block_slices, block_sum, broadcast_blocks, grid_shape
from .fp_emu import BF16, FpFormat, cast_fp, parse_format
from .noise import gen_gauss_bitwise_blocks, gen_gauss_boxmuller, gen_uniform, unpack_rows
from .prng import StreamKey

__all__ = [
    "NOISE_KINDS",
    "PqtConfig",
    "PqtLayerState",
    "PqtGrads",
    "SeedMismatchError",
    "bt_from_bi",
    "generate_noise",
    "pqt_forward",
    "sample_weights",
    "pqt_backward",
    "bitwidth_penalty",
    "TIERS",
    "LayerBitwidth",
    "BitwidthReport",
    "summarize_bitwidths",
    "bitwidth_report",
]

log = logging.getLogger(__name__)

# "zero" is a diagnostic source (R = 0) used to check that PQT degenerates to the baseline
NOISE_KINDS = ("gauss-bitwise", "gauss-boxmuller", "uniform", "zero")


class SeedMismatchError(RuntimeError):
    """Backward was called with a key/step that does not match the cached forward."""


@dataclass(frozen=True)
class PqtConfig:
    b_init: float = 6.0
    b_target: float = 4.0
    lam: float = 0.0
    b_l: int = 32
    noise_kind: str = "gauss-bitwise"
    operator_format: FpFormat | None = BF16

    def __post_init__(self):
        object.__setattr__(self, "operator_format", parse_format(self.operator_format))
        if not self.b_init >= self.b_target > 0:
            raise ValueError("need b_init >= b_target > 0")
        if self.b_l < 1:
            raise ValueError("b_l must be >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.noise_kind not in NOISE_KINDS:
            raise ValueError(f"noise_kind must be one of {NOISE_KINDS}")


@dataclass(eq=False)
class PqtLayerState:
    name: str
    w: np.ndarray
    b_i: np.ndarray
    key: StreamKey
    # forward cache, consumed by backward
    w_hat: np.ndarray | None = None
    cached_step: int | None = None
    cached_scale: np.ndarray | None = None
    noise_digest: bytes | None = None
    regen_checks: int = field(default=0)

    @classmethod
    def create(cls, name: str, w: np.ndarray, key: StreamKey, cfg: PqtConfig) -> PqtLayerState:
        b_i = np.ones(grid_shape(*w.shape, cfg.b_l))
        return cls(name, w, b_i, key)


class PqtGrads(NamedTuple):
    w: np.ndarray
    bt: np.ndarray
    bi: np.ndarray


def bt_from_bi(b_i, cfg: PqtConfig) -> np.ndarray:
    return cfg.b_target + np.asarray(b_i, dtype=np.float64) * (cfg.b_init - cfg.b_target)


def generate_noise(key: StreamKey, shape: tuple[int, int], b_l: int, kind: str) -> np.ndarray:
    """R for a whole matrix: one substream per block, row-major within each block."""
    R = np.zeros(shape, dtype=np.float64)
    if kind == "zero":
        return R
    if kind == "gauss-bitwise":
        return _bitwise_noise(key, shape, b_l, R)
    for idx, _, _, rs, cs in block_slices(*shape, b_l):
        bkey = key.for_block(idx)
        n = (rs.stop - rs.start) * (cs.stop - cs.start)
        if kind == "gauss-boxmuller":
            vals = gen_gauss_boxmuller(n, bkey)
        elif kind == "uniform":
            vals = gen_uniform(n, bkey)
        else:
            raise ValueError(f"unknown noise kind {kind!r}")
        R[rs, cs] = vals.reshape(rs.stop - rs.start, cs.stop - cs.start)
    return R


def _bitwise_noise(key, shape, b_l, R):
    # same bits as per-block gen_gauss_bitwise, batched over blocks of equal size
    groups: dict[tuple[int, int], list] = {}
    for idx, _, _, rs, cs in block_slices(*shape, b_l):
        groups.setdefault((rs.stop - rs.start, cs.stop - cs.start), []).append((idx, rs, cs))
    for (h, w), blocks in groups.items():
        words = gen_gauss_bitwise_blocks(h * w, key, [idx for idx, _, _ in blocks])
        sym = unpack_rows(words, h * w)
        for row, (_, rs, cs) in zip(sym, blocks):
            R[rs, cs] = row.reshape(h, w)
    return R


def pqt_forward(w, R, b_t, b_l: int, fmt: FpFormat | None = None):
    """Pure forward: returns ``(w_hat, scale)`` where scale is the per-block noise unit."""
    w = np.asarray(w, dtype=np.float64)
    b_t = np.asarray(b_t, dtype=np.float64)
    if b_t.shape != grid_shape(*w.shape, b_l):
        raise ValueError(f"b_t grid {b_t.shape} does not match weight {w.shape} with b_l={b_l}")
    scale = block_absmax(w, b_l) * np.exp2(1.0 - b_t)
    w_hat = w + np.asarray(R) * broadcast_blocks(scale, *w.shape, b_l)
    return cast_fp(w_hat, fmt), scale


def _digest(R: np.ndarray, kind: str) -> bytes:
    # Gaussian symbols are small integers, so hashing them as int8 loses nothing
    data = R.astype(np.int8) if kind != "uniform" else np.ascontiguousarray(R)
    return hashlib.blake2b(data.data, digest_size=16).digest()


def sample_weights(state: PqtLayerState, cfg: PqtConfig, step: int | None = None) -> np.ndarray:
    step = state.key.step if step is None else step
    if state.b_i.shape != grid_shape(*state.w.shape, cfg.b_l):
        raise ValueError(f"b_i grid {state.b_i.shape} does not match weight {state.w.shape}")
    b_t = bt_from_bi(state.b_i, cfg)
    if np.any(b_t < 2):
        log.warning("layer %s: b_t fell below 2 (min %.3f)", state.name, float(b_t.min()))
    R = generate_noise(state.key.at_step(step), state.w.shape, cfg.b_l, cfg.noise_kind)
    w_hat, scale = pqt_forward(state.w, R, b_t, cfg.b_l, cfg.operator_format)
    w_hat = w_hat.astype(state.w.dtype, copy=False)
    state.w_hat = w_hat
    state.cached_step = step
    state.cached_scale = scale
    state.noise_digest = _digest(R, cfg.noise_kind)
    return w_hat


def pqt_backward(grad_what, state: PqtLayerState, cfg: PqtConfig, step: int | None = None) -> PqtGrads:
    step = state.key.step if step is None else step
    if state.cached_step is None or state.cached_step != step:
        raise SeedMismatchError(
            f"layer {state.name}: backward at step {step} but forward cached step {state.cached_step}"
        )
    R = generate_noise(state.key.at_step(step), state.w.shape, cfg.b_l, cfg.noise_kind)
    if _digest(R, cfg.noise_kind) != state.noise_digest:
        raise SeedMismatchError(f"layer {state.name}: regenerated noise differs from forward noise")
    state.regen_checks += 1
    grad_what = np.asarray(grad_what)
    grad_bt = -math.log(2.0) * state.cached_scale * block_sum(grad_what * R, cfg.b_l)
    return PqtGrads(grad_what, grad_bt, grad_bt * (cfg.b_init - cfg.b_target))


def bitwidth_penalty(bt_grids, cfg: PqtConfig):
    """``lam * sum_layers mean_blocks |b_t - b_target|`` and its gradient per grid."""
    total = 0.0
    grads = []
    for bt in bt_grids:
        bt = np.asarray(bt, dtype=np.float64)
        dev = bt - cfg.b_target
        total += float(np.abs(dev).mean())
        grads.append(cfg.lam * np.sign(dev) / bt.size)
    return cfg.lam * total, grads


TIERS = ("<=5", "<=9", "<=12", ">12")


@dataclass
class LayerBitwidth:
    name: str
    mean: float
    std: float
    min: float
    max: float
    blocks: int


@dataclass
class BitwidthReport:
    layers: list[LayerBitwidth]
    tiers: dict[str, float]  # percent of parameters

    def format(self) -> str:
        lines = [f"{'layer':<24}{'mean':>8}{'std':>8}{'min':>8}{'max':>8}{'blocks':>8}"]
        for r in self.layers:
            lines.append(f"{r.name:<24}{r.mean:8.3f}{r.std:8.3f}{r.min:8.3f}{r.max:8.3f}{r.blocks:8d}")
        lines.append("  ".join(f"b_t{k}: {v:.2f}%" for k, v in self.tiers.items()))
        return "\n".join(lines)


def _tier_index(bt: np.ndarray) -> np.ndarray:
    return np.select([bt <= 5, bt <= 9, bt <= 12], [0, 1, 2], default=3)


def summarize_bitwidths(entries, b_l: int) -> BitwidthReport:
    """``entries``: iterable of ``(name, b_t grid, weight shape)``."""
    rows, counts = [], np.zeros(len(TIERS))
    for name, bt, shape in entries:
        bt = np.asarray(bt, dtype=np.float64)
        rows.append(LayerBitwidth(name, float(bt.mean()), float(bt.std()), float(bt.min()), float(bt.max()), bt.size))
        # parameters per block, partial edge blocks included
        sizes = np.ones(shape)
        n_params = block_sum(sizes, b_l)
        np.add.at(counts, _tier_index(bt).ravel(), n_params.ravel())
    total = counts.sum()
    pct = 100.0 * counts / total if total else counts
    return BitwidthReport(rows, dict(zip(TIERS, (float(p) for p in pct))))


def bitwidth_report(states, cfg: PqtConfig) -> BitwidthReport:
    return summarize_bitwidths(((s.name, bt_from_bi(s.b_i, cfg), s.w.shape) for s in states), cfg.b_l)
