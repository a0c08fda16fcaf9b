"""Run configuration: a flat ``key = value`` text file."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from .fp_emu import FpFormat, parse_format
from .pqt_core import PqtConfig

__all__ = ["ConfigError", "ModelConfig", "parse_apply", "load_config", "parse_config_text"]

ROLES = ("qkv", "out", "up", "down")
METHODS = ("baseline", "gaussws", "diffq")
DEFAULT_NOISE = {"gaussws": "gauss-bitwise", "diffq": "uniform"}


class ConfigError(ValueError):
    pass


def parse_apply(text: str | frozenset) -> frozenset:
    """``"all"``, ``"od"`` (out+down) or a comma list of roles."""
    if isinstance(text, frozenset):
        return text
    text = text.strip().lower().strip("[]")
    if text == "all":
        return frozenset(ROLES)
    if text == "od":
        return frozenset({"out", "down"})
    if text in ("", "none"):
        return frozenset()
    parts = frozenset(p.strip() for p in text.split(","))
    unknown = parts - set(ROLES)
    if unknown:
        raise ConfigError(f"unknown layer roles {sorted(unknown)}; choose from {ROLES}, 'all' or 'od'")
    return parts


@dataclass(frozen=True)
class ModelConfig:
    task: str = "synthetic-regression"
    model: str = "mlp"
    layers: int = 2
    width: int = 64
    heads: int = 4
    context: int = 64
    method: str = "baseline"
    apply: frozenset = field(default_factory=lambda: frozenset(ROLES))
    # optimizer
    steps: int = 500
    batch_size: int = 32
    lr: float = 3e-4
    min_lr: float = 3e-5
    warmup_steps: int = 0
    weight_decay: float = 0.1
    bi_weight_decay: float = 0.1
    bi_lr_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    grad_clip: float = 1.0
    # PQT
    b_init: float = 6.0
    b_target: float = 4.0
    lam: float = 0.0
    block_size: int = 32
    noise: str = ""
    operator_format: FpFormat | None = FpFormat(8, 7)
    # data / eval
    corpus: str = ""
    in_dim: int = 16
    out_dim: int = 4
    samples: int = 2048
    eval_every: int = 100
    eval_batches: int = 4
    eval_fraction: float = 0.1
    dtype: str = "float64"

    def __post_init__(self):
        if self.task not in ("synthetic-regression", "char-lm"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.model not in ("mlp", "tiny-transformer"):
            raise ConfigError(f"unknown model {self.model!r}")
        if (self.task == "char-lm") != (self.model == "tiny-transformer"):
            raise ConfigError("char-lm pairs with tiny-transformer, synthetic-regression with mlp")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        object.__setattr__(self, "apply", parse_apply(self.apply))
        object.__setattr__(self, "operator_format", parse_format(self.operator_format))
        if self.method != "baseline" and not self.apply:
            raise ConfigError("apply set must be nonempty for PQT methods")
        if self.model == "tiny-transformer" and self.width % self.heads:
            raise ConfigError("width must be divisible by heads")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")

    @property
    def noise_kind(self) -> str:
        return self.noise or DEFAULT_NOISE.get(self.method, "gauss-bitwise")

    def pqt(self) -> PqtConfig:
        return PqtConfig(self.b_init, self.b_target, self.lam, self.block_size, self.noise_kind, self.operator_format)

    def replace(self, **kw) -> ModelConfig:
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, frozenset):
                v = ",".join(r for r in ROLES if r in v) or "none"
            elif v is None:
                v = "none"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_ALIASES = {"lambda": "lam", "apply_set": "apply", "b_l": "block_size"}


def _coerce(name: str, raw: str, typ):
    try:
        if typ in ("int", int):
            return int(raw)
        if typ in ("float", float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from exc
    return raw


def parse_config_text(text: str, **overrides) -> ModelConfig:
    known = {f.name: f.type for f in fields(ModelConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, known[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ModelConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, **overrides) -> ModelConfig:
    path = Path(path)
    cfg = parse_config_text(path.read_text(), **overrides)
    if cfg.corpus and not Path(cfg.corpus).is_absolute():
        cfg = cfg.replace(corpus=str((path.parent / cfg.corpus).resolve()))
    return cfg
