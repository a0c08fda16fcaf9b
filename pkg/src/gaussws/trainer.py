"""Desk-scale training harness: AdamW, loss/bitwidth CSVs, checkpoints, evaluation."""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ModelConfig
from .data import CharDataset, RegressionDataset
from .models import Model, build_model
from .pqt_core import PqtConfig, bitwidth_penalty, bitwidth_report, bt_from_bi
from .prng import StreamKey

__all__ = [
    "LOSS_COLUMNS",
    "TrainingDiverged",
    "AdamW",
    "lr_at",
    "load_dataset",
    "RunResult",
    "train_run",
    "evaluate_model",
    "evaluate",
    "load_model",
    "model_entries",
    "bitwidth_csv_text",
    "checkpoint_bitwidths",
]

LOSS_COLUMNS = ("step", "tokens", "train_loss", "eval_loss", "lr", "penalty", "mean_bt", "min_bt", "max_bt")


class TrainingDiverged(RuntimeError):
    pass


def lr_at(cfg: ModelConfig, step: int) -> float:
    """Linear warmup, then linear decay from ``lr`` to ``min_lr`` at the last step."""
    if cfg.warmup_steps and step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps - 1, 1)
    frac = min((step - cfg.warmup_steps) / span, 1.0)
    return cfg.lr + frac * (cfg.min_lr - cfg.lr)


class AdamW:
    """Adam with decoupled weight decay; per-parameter (lr scale, decay) groups."""

    def __init__(self, params: dict[str, np.ndarray], groups: dict[str, tuple[float, float]], beta1, beta2, eps):
        self.params = params
        self.groups = groups
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p) for n, p in params.items()}
        self.v = {n: np.zeros_like(p) for n, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            scale, decay = self.groups[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            step_lr = lr * scale
            # in-place, so PQT layer states sharing these arrays stay in sync
            p *= 1.0 - step_lr * decay
            p -= step_lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _param_groups(model: Model) -> dict[str, tuple[float, float]]:
    cfg = model.cfg
    groups = {}
    for name, p in model.params.items():
        if name.endswith(".bi"):
            groups[name] = (cfg.bi_lr_scale, cfg.bi_weight_decay)
        elif p.ndim >= 2:
            groups[name] = (1.0, cfg.weight_decay)
        else:
            groups[name] = (1.0, 0.0)
    return groups


def load_dataset(cfg: ModelConfig, root_seed: int):
    if cfg.task == "char-lm":
        if not cfg.corpus:
            raise FileNotFoundError("char-lm needs a corpus file (config key 'corpus')")
        return CharDataset.from_file(cfg.corpus, cfg.context, cfg.eval_fraction)
    # the teacher is fixed across seeds so that seeds vary only the student
    return RegressionDataset(cfg.in_dim, cfg.out_dim, cfg.samples, seed=12345, eval_fraction=cfg.eval_fraction)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x)) if not isinstance(x, int) else str(x)


def evaluate_model(model: Model, dataset, noise: str = "zero", sample: int = 0) -> float:
    batches = dataset.eval_batches(model.cfg.batch_size, model.cfg.eval_batches)
    total, n = 0.0, 0
    for batch in batches:
        loss, _ = model.loss(Tape(), batch, noise, sample)
        size = batch[0].shape[0]
        total += float(loss.value) * size
        n += size
    return total / n


def model_entries(model: Model, dataset=None) -> dict[str, np.ndarray]:
    entries = dict(model.params)
    for name, state in model.pqt.items():
        k = state.key
        entries[f"{name}.key"] = np.array([k.root_seed, k.layer_index, k.step, k.block_index], dtype=np.uint64)
    cfg = model.pqt_cfg
    entries["pqt.b_init"] = np.array(cfg.b_init)
    entries["pqt.b_target"] = np.array(cfg.b_target)
    entries["pqt.block_size"] = np.array(float(cfg.b_l))
    entries["meta.seed"] = np.array([model.root_seed], dtype=np.uint64)
    if isinstance(dataset, CharDataset):
        entries["meta.vocab"] = np.array([ord(c) for c in dataset.vocab], dtype=np.uint64)
    return entries


@dataclass
class RunResult:
    out_dir: Path
    loss_csv: Path
    bitwidth_csv: Path
    checkpoint: Path
    train_loss: list[float] = field(default_factory=list)
    eval_loss: list[tuple[int, float]] = field(default_factory=list)
    mean_bt: list[float] = field(default_factory=list)
    regen_checks: int = 0
    model: Model | None = None
    dataset: object = None

    @property
    def final_eval(self) -> float:
        return self.eval_loss[-1][1]


def _threads(threads: int | None):
    if not threads:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def bitwidth_csv_text(grids: dict[str, np.ndarray]) -> str:
    lines = ["layer_name,block_row,block_col,b_t"]
    for name, bt in grids.items():
        for (I, J), v in np.ndenumerate(bt):
            lines.append(f"{name},{I},{J},{_fmt(v)}")
    return "\n".join(lines) + "\n"


def _write_bitwidth_csv(path: Path, model: Model) -> None:
    path.write_text(bitwidth_csv_text(model.bt_grids()))


def checkpoint_bitwidths(checkpoint: str | Path):
    """``(b_t grids by layer, weight shapes by layer, PqtConfig)`` read from a checkpoint's b_i entries."""
    entries = load_checkpoint(checkpoint)
    layers = sorted(n[: -len(".bi")] for n in entries if n.endswith(".bi"))
    if not layers:
        raise CheckpointError("checkpoint has no b_i entries")
    for k in ("pqt.b_init", "pqt.b_target", "pqt.block_size"):
        if k not in entries:
            raise CheckpointError(f"checkpoint is missing {k}")
    cfg = PqtConfig(
        b_init=float(entries["pqt.b_init"]),
        b_target=float(entries["pqt.b_target"]),
        b_l=int(entries["pqt.block_size"]),
    )
    grids, shapes = {}, {}
    for name in layers:
        w = entries.get(f"{name}.w")
        if w is None:
            raise CheckpointError(f"checkpoint has b_i for {name} but no weight")
        grids[name] = bt_from_bi(entries[f"{name}.bi"], cfg)
        shapes[name] = w.shape
    return grids, shapes, cfg


def _diverged(out_dir: Path, step: int, model: Model, loss: float) -> TrainingDiverged:
    lines = [f"step = {step}", f"loss = {loss}"]
    for name, bt in model.bt_grids().items():
        lines.append(f"{name}: b_t mean {bt.mean():.4f} min {bt.min():.4f} max {bt.max():.4f}")
    for name, p in model.params.items():
        if not np.all(np.isfinite(p)):
            lines.append(f"{name}: non-finite parameter values")
    (out_dir / "diverged.txt").write_text("\n".join(lines) + "\n")
    return TrainingDiverged(f"non-finite loss at step {step}; diagnostics in {out_dir / 'diverged.txt'}")


def train_run(cfg: ModelConfig, root_seed: int, out_dir: str | Path, threads: int | None = None) -> RunResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _threads(threads):
        return _train(cfg, root_seed, out_dir)


def _train(cfg: ModelConfig, root_seed: int, out_dir: Path) -> RunResult:
    dataset = load_dataset(cfg, root_seed)
    model = build_model(cfg, root_seed, getattr(dataset, "vocab_size", None))
    data_rng = np.random.default_rng(np.random.SeedSequence([root_seed, 2]))
    opt = AdamW(model.params, _param_groups(model), cfg.beta1, cfg.beta2, cfg.eps)
    pqt_cfg = model.pqt_cfg
    result = RunResult(out_dir, out_dir / "loss.csv", out_dir / "bitwidth.csv", out_dir / "checkpoint.pqtc")
    rows = [",".join(LOSS_COLUMNS)]
    tokens_per_step = cfg.batch_size * (cfg.context if cfg.task == "char-lm" else 1)

    for step in range(cfg.steps):
        lr = lr_at(cfg, step)
        batch = dataset.batch(data_rng, cfg.batch_size)
        tape = Tape()
        loss, leaves = model.loss(tape, batch, "train")
        grids = model.bt_grids()
        penalty, pen_grads = bitwidth_penalty(list(grids.values()), pqt_cfg) if grids else (0.0, [])
        train_loss = float(loss.value) + penalty
        if not math.isfinite(train_loss):
            raise _diverged(out_dir, step, model, train_loss)
        tape.backward(loss)
        grads = {n: t.grad for n, t in leaves.items() if t.grad is not None}
        if pqt_cfg.lam > 0:
            for name, g in zip(grids, pen_grads):
                grads[f"{name}.bi"] = grads[f"{name}.bi"] + g * (pqt_cfg.b_init - pqt_cfg.b_target)
        if cfg.grad_clip > 0:
            norm = math.sqrt(sum(float(np.sum(g * g)) for n, g in grads.items() if not n.endswith(".bi")))
            if norm > cfg.grad_clip:
                for n in grads:
                    if not n.endswith(".bi"):
                        grads[n] = grads[n] * (cfg.grad_clip / norm)
        opt.step(grads, lr)
        model.advance_keys()

        eval_loss = None
        if (step + 1) % cfg.eval_every == 0 or step == cfg.steps - 1:
            eval_loss = evaluate_model(model, dataset)
            if not math.isfinite(eval_loss):
                raise _diverged(out_dir, step, model, eval_loss)
            result.eval_loss.append((step, eval_loss))
        all_bt = np.concatenate([g.ravel() for g in grids.values()]) if grids else None
        stats = (all_bt.mean(), all_bt.min(), all_bt.max()) if all_bt is not None else (None, None, None)
        if all_bt is not None:
            result.mean_bt.append(float(stats[0]))
        result.train_loss.append(train_loss)
        rows.append(
            ",".join(_fmt(v) for v in (step, (step + 1) * tokens_per_step, train_loss, eval_loss, lr, penalty, *stats))
        )

    result.loss_csv.write_text("\n".join(rows) + "\n")
    _write_bitwidth_csv(result.bitwidth_csv, model)
    save_checkpoint(result.checkpoint, model_entries(model, dataset))
    (out_dir / "config.txt").write_text(cfg.to_text())
    summary = [f"seed = {root_seed}", f"steps = {cfg.steps}", f"final_eval_loss = {_fmt(result.final_eval)}"]
    if model.pqt:
        summary.append(bitwidth_report(model.pqt.values(), pqt_cfg).format())
    (out_dir / "run.txt").write_text("\n".join(summary) + "\n")
    result.regen_checks = sum(s.regen_checks for s in model.pqt.values())
    result.model = model
    result.dataset = dataset
    return result


def load_model(checkpoint: str | Path, cfg: ModelConfig, dataset=None) -> Model:
    entries = load_checkpoint(checkpoint)
    if "meta.seed" not in entries:
        raise CheckpointError("checkpoint has no meta.seed entry")
    seed = int(entries["meta.seed"][0])
    vocab = entries.get("meta.vocab")
    model = build_model(cfg, seed, None if vocab is None else len(vocab))
    for name, p in model.params.items():
        if name not in entries:
            raise CheckpointError(f"checkpoint is missing parameter {name}")
        if entries[name].shape != p.shape:
            raise CheckpointError(f"parameter {name}: shape {entries[name].shape} != {p.shape}")
        np.copyto(p, entries[name])
    for name, state in model.pqt.items():
        k = entries.get(f"{name}.key")
        if k is None:
            raise CheckpointError(f"checkpoint is missing stream key for {name}")
        state.key = StreamKey(*(int(v) for v in k))
    return model


def evaluate(checkpoint: str | Path, cfg: ModelConfig, dataset=None, sampled: int = 0) -> float | np.ndarray:
    """Mean held-out loss with R = 0, or, if ``sampled > 0``, the losses of that many noise draws."""
    model = load_model(checkpoint, cfg)
    dataset = dataset if dataset is not None else load_dataset(cfg, model.root_seed)
    if sampled:
        return np.array([evaluate_model(model, dataset, "eval", s) for s in range(sampled)])
    return evaluate_model(model, dataset)
