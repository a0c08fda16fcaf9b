"""Toy models whose linear layers can run through Gaussian weight sampling.

Parameters live in a flat ``name -> ndarray`` dict.  A PQT layer's state
shares its ``w``/``b_i`` arrays with that dict, so in-place optimizer
updates are seen by both.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor
from .config import ModelConfig
from .pqt_core import PqtConfig, PqtLayerState, bt_from_bi
from .prng import advance_step, derive_layer_key

__all__ = ["Model", "MLP", "TinyTransformer", "build_model", "EVAL_STEP_BASE"]

# sampled-noise evaluation draws keys from a step range training never reaches
EVAL_STEP_BASE = 1 << 40


class Model:
    def __init__(self, cfg: ModelConfig, root_seed: int):
        self.cfg = cfg
        self.pqt_cfg: PqtConfig = cfg.pqt()
        self.root_seed = root_seed
        self.params: dict[str, np.ndarray] = {}
        self.roles: dict[str, str] = {}  # linear name -> role
        self.pqt: dict[str, PqtLayerState] = {}
        self._layer_count = 0
        self.dtype = np.dtype(cfg.dtype)
        self._rng = np.random.default_rng(np.random.SeedSequence([root_seed, 1]))

    # -- construction helpers --

    def _init(self, name: str, shape, std: float) -> None:
        self.params[name] = (self._rng.standard_normal(shape) * std).astype(self.dtype)

    def _linear(self, name: str, role: str, fan_in: int, fan_out: int, std: float, bias: bool = True) -> None:
        self._init(f"{name}.w", (fan_in, fan_out), std)
        if bias:
            self.params[f"{name}.b"] = np.zeros(fan_out, dtype=self.dtype)
        self.roles[name] = role
        # every linear gets a layer index so that the apply set cannot shift other layers' keys
        key = derive_layer_key(self.root_seed, self._layer_count)
        self._layer_count += 1
        if self.cfg.method != "baseline" and role in self.cfg.apply:
            state = PqtLayerState.create(name, self.params[f"{name}.w"], key, self.pqt_cfg)
            self.params[f"{name}.bi"] = state.b_i
            self.pqt[name] = state

    # -- forward helpers --

    def advance_keys(self) -> None:
        for state in self.pqt.values():
            state.key = advance_step(state.key)

    def weight(self, tape: Tape, leaves: dict[str, Tensor], name: str, noise: str, sample: int) -> Tensor:
        """``noise`` is ``"train"`` (R at the layer's current key step), ``"zero"`` (R = 0)
        or ``"eval"`` (R from evaluation key number ``sample``)."""
        w = leaves[f"{name}.w"]
        state = self.pqt.get(name)
        if state is None or noise == "zero":
            return tape.cast_weight(w, self.pqt_cfg.operator_format)
        step = EVAL_STEP_BASE + sample if noise == "eval" else state.key.step
        return tape.pqt_weight(w, leaves[f"{name}.bi"], state, self.pqt_cfg, step)

    def linear(self, tape, leaves, name, x, noise, sample) -> Tensor:
        y = tape.matmul(x, self.weight(tape, leaves, name, noise, sample))
        if f"{name}.b" in leaves:
            y = tape.add(y, leaves[f"{name}.b"])
        return y

    def bt_grids(self) -> dict[str, np.ndarray]:
        return {n: bt_from_bi(s.b_i, self.pqt_cfg) for n, s in self.pqt.items()}

    def loss(self, tape: Tape, batch, noise: str = "train", sample: int = 0):
        """Returns ``(loss tensor, leaves)``."""
        leaves = {n: tape.leaf(v, n) for n, v in self.params.items()}
        return self.forward_loss(tape, leaves, batch, noise, sample), leaves

    def forward_loss(self, tape, leaves, batch, noise, sample) -> Tensor:
        raise NotImplementedError


class MLP(Model):
    """``in -> width (x layers) -> out`` with tanh; hidden linears have role "up", the last "down"."""

    def __init__(self, cfg: ModelConfig, root_seed: int):
        super().__init__(cfg, root_seed)
        dims = [cfg.in_dim] + [cfg.width] * cfg.layers + [cfg.out_dim]
        self.names = []
        for i in range(len(dims) - 1):
            role = "down" if i == len(dims) - 2 else "up"
            self._linear(f"fc{i}", role, dims[i], dims[i + 1], 1.0 / np.sqrt(dims[i]))
            self.names.append(f"fc{i}")

    def forward_loss(self, tape, leaves, batch, noise, sample):
        x, y = batch
        h = tape.leaf(np.asarray(x, dtype=self.dtype))
        for i, name in enumerate(self.names):
            h = self.linear(tape, leaves, name, h, noise, sample)
            if i < len(self.names) - 1:
                h = tape.tanh(h)
        return tape.mse(h, np.asarray(y, dtype=self.dtype))


class TinyTransformer(Model):
    """Pre-norm GPT-style decoder: fused qkv, out, up (4x), down per block."""

    def __init__(self, cfg: ModelConfig, root_seed: int, vocab_size: int):
        super().__init__(cfg, root_seed)
        C = cfg.width
        self.vocab_size = vocab_size
        self._init("wte", (vocab_size, C), 0.02)
        self._init("wpe", (cfg.context, C), 0.02)
        proj_std = 0.02 / np.sqrt(2 * cfg.layers)
        for i in range(cfg.layers):
            p = f"h{i}"
            for ln in ("ln1", "ln2"):
                self.params[f"{p}.{ln}.g"] = np.ones(C, dtype=self.dtype)
                self.params[f"{p}.{ln}.b"] = np.zeros(C, dtype=self.dtype)
            self._linear(f"{p}.qkv", "qkv", C, 3 * C, 0.02)
            self._linear(f"{p}.out", "out", C, C, proj_std)
            self._linear(f"{p}.up", "up", C, 4 * C, 0.02)
            self._linear(f"{p}.down", "down", 4 * C, C, proj_std)
        self.params["ln_f.g"] = np.ones(C, dtype=self.dtype)
        self.params["ln_f.b"] = np.zeros(C, dtype=self.dtype)
        self._init("head.w", (C, vocab_size), 0.02)

    def forward_loss(self, tape, leaves, batch, noise, sample):
        idx, targets = batch
        T = idx.shape[1]
        if T > self.cfg.context:
            raise ValueError("sequence longer than context")
        x = tape.add(tape.embedding(leaves["wte"], idx), tape.embedding(leaves["wpe"], np.arange(T)))
        for i in range(self.cfg.layers):
            p = f"h{i}"
            h = tape.layer_norm(x, leaves[f"{p}.ln1.g"], leaves[f"{p}.ln1.b"])
            h = self.linear(tape, leaves, f"{p}.qkv", h, noise, sample)
            h = tape.causal_attention(h, self.cfg.heads)
            x = tape.add(x, self.linear(tape, leaves, f"{p}.out", h, noise, sample))
            h = tape.layer_norm(x, leaves[f"{p}.ln2.g"], leaves[f"{p}.ln2.b"])
            h = tape.gelu(self.linear(tape, leaves, f"{p}.up", h, noise, sample))
            x = tape.add(x, self.linear(tape, leaves, f"{p}.down", h, noise, sample))
        x = tape.layer_norm(x, leaves["ln_f.g"], leaves["ln_f.b"])
        logits = tape.matmul(x, leaves["head.w"])
        return tape.cross_entropy(logits, targets)


def build_model(cfg: ModelConfig, root_seed: int, vocab_size: int | None = None) -> Model:
    if cfg.model == "mlp":
        return MLP(cfg, root_seed)
    if vocab_size is None:
        raise ValueError("tiny-transformer needs a vocabulary size")
    return TinyTransformer(cfg, root_seed, vocab_size)
