"""Training data: char-level text windows and a teacher-network regression set."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["synthesize_corpus", "CharDataset", "RegressionDataset"]

_NOUNS = (
    "river mountain engine signal garden window market letter candle forest harbor "
    "village machine number pattern teacher student circuit kernel matrix weight block "
    "sailor lantern bridge tower meadow winter summer clock mirror compass"
).split()
_VERBS = (
    "carries builds follows measures finds opens closes watches counts writes reads "
    "moves turns holds breaks keeps draws lifts sends trains samples rounds"
).split()
_ADJS = (
    "quiet bright narrow heavy small ancient silver hidden careful random gentle "
    "frozen golden hollow patient steady noisy sharp"
).split()
_ADVS = "slowly quickly often rarely gladly softly twice again".split()
_PREPS = "under over near beyond inside across behind".split()


def _sentence(rng: np.random.Generator) -> str:
    def np_():
        words = ["the"]
        if rng.random() < 0.5:
            words.append(_ADJS[rng.integers(len(_ADJS))])
        words.append(_NOUNS[rng.integers(len(_NOUNS))])
        return words

    words = np_() + [_VERBS[rng.integers(len(_VERBS))]] + np_()
    if rng.random() < 0.4:
        words += [_PREPS[rng.integers(len(_PREPS))]] + np_()
    if rng.random() < 0.3:
        words.append(_ADVS[rng.integers(len(_ADVS))])
    text = " ".join(words)
    return text[0].upper() + text[1:] + ("?" if rng.random() < 0.1 else ".")


def synthesize_corpus(n_bytes: int, seed: int = 0) -> str:
    """Deterministic English-like text from a small probabilistic grammar."""
    rng = np.random.default_rng(seed)
    parts, size = [], 0
    while size < n_bytes:
        para = " ".join(_sentence(rng) for _ in range(int(rng.integers(3, 8)))) + "\n"
        parts.append(para)
        size += len(para)
    return "".join(parts)[:n_bytes]


class CharDataset:
    """Byte/char-level language-model windows with a held-out tail."""

    def __init__(self, text: str, context: int, eval_fraction: float = 0.1):
        if len(text) < 4 * (context + 1):
            raise ValueError("corpus is too small for the context length")
        self.vocab = sorted(set(text))
        lookup = {c: i for i, c in enumerate(self.vocab)}
        ids = np.fromiter((lookup[c] for c in text), dtype=np.int64, count=len(text))
        split = int(len(ids) * (1.0 - eval_fraction))
        self.train, self.held_out = ids[:split], ids[split:]
        self.context = context

    @classmethod
    def from_file(cls, path: str | Path, context: int, eval_fraction: float = 0.1) -> CharDataset:
        return cls(Path(path).read_text(encoding="utf-8"), context, eval_fraction)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def batch(self, rng: np.random.Generator, batch_size: int):
        starts = rng.integers(0, self.train.size - self.context - 1, size=batch_size)
        idx = starts[:, None] + np.arange(self.context + 1)
        chunk = self.train[idx]
        return chunk[:, :-1], chunk[:, 1:]

    def eval_batches(self, batch_size: int, n_batches: int):
        """Consecutive non-overlapping windows of the held-out tail, always the same ones."""
        span = self.context + 1
        n = min(batch_size * n_batches, (self.held_out.size - 1) // span)
        if n == 0:
            raise ValueError("empty evaluation set")
        chunk = self.held_out[: n * span].reshape(n, span)
        return [(chunk[i : i + batch_size, :-1], chunk[i : i + batch_size, 1:]) for i in range(0, n, batch_size)]


class RegressionDataset:
    """Targets from a fixed random two-layer tanh teacher."""

    def __init__(self, in_dim: int, out_dim: int, samples: int, seed: int, eval_fraction: float = 0.1):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((samples, in_dim))
        w1 = rng.standard_normal((in_dim, 32)) / np.sqrt(in_dim)
        w2 = rng.standard_normal((32, out_dim)) / np.sqrt(32)
        y = np.tanh(x @ w1) @ w2
        split = int(samples * (1.0 - eval_fraction))
        self.x_train, self.y_train = x[:split], y[:split]
        self.x_eval, self.y_eval = x[split:], y[split:]

    def batch(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(0, self.x_train.shape[0], size=batch_size)
        return self.x_train[idx], self.y_train[idx]

    def eval_batches(self, batch_size: int, n_batches: int):
        n = self.x_eval.shape[0]
        if n == 0:
            raise ValueError("empty evaluation set")
        return [(self.x_eval[i : i + batch_size], self.y_eval[i : i + batch_size]) for i in range(0, n, batch_size)]
