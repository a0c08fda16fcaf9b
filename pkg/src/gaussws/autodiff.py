"""A small reverse-mode autodiff tape over numpy arrays.

Nodes are appended in execution order, which is already a topological
order; ``Tape.backward`` walks them once in reverse.  Only the operators a
toy MLP / transformer needs are provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fp_emu import FpFormat, cast_fp
from .pqt_core import PqtConfig, PqtLayerState, pqt_backward, sample_weights

__all__ = ["Tape", "Tensor"]


class Tensor:
    __slots__ = ("value", "grad", "tape", "index", "name")

    def __init__(self, tape: Tape, value: np.ndarray, index: int, name: str | None = None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return self.tape.add(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


_GELU_C = math.sqrt(2.0 / math.pi)


class Tape:
    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, kind, inputs, value, backward, name=None) -> Tensor:
        out = Tensor(self, value, len(self.nodes), name)
        self.nodes.append(Node(kind, tuple(inputs), out, backward))
        return out

    def leaf(self, value, name: str | None = None) -> Tensor:
        value = np.asarray(value)
        if value.dtype.kind != "f":
            value = value.astype(np.float64)
        return self._record("leaf", (), value, None, name)

    def backward(self, loss: Tensor) -> None:
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes[: loss.index + 1]):
            g = node.output.grad
            if node.backward is None or g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None:
                    continue
                inp.grad = gi if inp.grad is None else inp.grad + gi

    # ---- elementwise and linear algebra ----

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return self._record(
            "add", (a, b), a.value + b.value, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
        )

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        return self._record(
            "mul",
            (a, b),
            a.value * b.value,
            lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
        )

    def matmul(self, a: Tensor, w: Tensor) -> Tensor:
        """``(..., K) @ (K, N)``; gradients follow T = A W."""
        if a.shape[-1] != w.shape[0]:
            raise ValueError(f"matmul inner dims differ: {a.shape} @ {w.shape}")

        a2 = a.value.reshape(-1, a.shape[-1])

        def back(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ w.value.T).reshape(a.shape), a2.T @ g2

        out = (a2 @ w.value).reshape(a.shape[:-1] + (w.shape[1],))
        return self._record("matmul", (a, w), out, back)

    def tanh(self, x: Tensor) -> Tensor:
        y = np.tanh(x.value)
        return self._record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))

    def relu(self, x: Tensor) -> Tensor:
        return self._record("relu", (x,), np.maximum(x.value, 0.0), lambda g: (g * (x.value > 0),))

    def gelu(self, x: Tensor) -> Tensor:
        v = x.value
        t = np.tanh(_GELU_C * (v + 0.044715 * v * v * v))

        def back(g):
            dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
            return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

        return self._record("gelu", (x,), 0.5 * v * (1.0 + t), back)

    def layer_norm(self, x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
        mu = x.value.mean(axis=-1, keepdims=True)
        xc = x.value - mu
        rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
        xhat = xc * rstd

        def back(g):
            gx = g * gain.value
            n = x.shape[-1]
            dx = rstd / n * (n * gx - gx.sum(-1, keepdims=True) - xhat * (gx * xhat).sum(-1, keepdims=True))
            return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

        return self._record("layer_norm", (x, gain, bias), xhat * gain.value + bias.value, back)

    def embedding(self, table: Tensor, idx: np.ndarray) -> Tensor:
        idx = np.asarray(idx)

        def back(g):
            gt = np.zeros_like(table.value)
            np.add.at(gt, idx.ravel(), g.reshape(-1, table.shape[1]))
            return (gt,)

        return self._record("embedding", (table,), table.value[idx], back)

    def causal_attention(self, qkv: Tensor, n_head: int) -> Tensor:
        """Multi-head causal self-attention on a fused ``(B, T, 3C)`` projection."""
        B, T, C3 = qkv.shape
        C = C3 // 3
        D = C // n_head
        q, k, v = (qkv.value[..., i * C : (i + 1) * C].reshape(B, T, n_head, D).transpose(0, 2, 1, 3) for i in range(3))
        scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(D)
        mask = np.triu(np.ones((T, T), dtype=bool), 1)
        scores = np.where(mask, -np.inf, scores)
        scores -= scores.max(-1, keepdims=True)
        p = np.exp(scores)
        p /= p.sum(-1, keepdims=True)
        y = (p @ v).transpose(0, 2, 1, 3).reshape(B, T, C)

        def back(g):
            gy = g.reshape(B, T, n_head, D).transpose(0, 2, 1, 3)
            gv = p.transpose(0, 1, 3, 2) @ gy
            gp = gy @ v.transpose(0, 1, 3, 2)
            gs = p * (gp - (gp * p).sum(-1, keepdims=True)) / math.sqrt(D)
            gq = gs @ k
            gk = gs.transpose(0, 1, 3, 2) @ q
            parts = [t.transpose(0, 2, 1, 3).reshape(B, T, C) for t in (gq, gk, gv)]
            return (np.concatenate(parts, axis=-1),)

        return self._record("attention", (qkv,), y, back)

    # ---- losses ----

    def cross_entropy(self, logits: Tensor, targets: np.ndarray) -> Tensor:
        """Mean token cross-entropy; ``logits`` is ``(..., V)``."""
        V = logits.shape[-1]
        z = logits.value.reshape(-1, V)
        t = np.asarray(targets).ravel()
        z = z - z.max(-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(-1, keepdims=True))
        n = t.size
        loss = -logp[np.arange(n), t].mean()

        def back(g):
            d = np.exp(logp)
            d[np.arange(n), t] -= 1.0
            return ((g / n) * d.reshape(logits.shape),)

        return self._record("cross_entropy", (logits,), np.asarray(loss), back)

    def mse(self, pred: Tensor, target: np.ndarray) -> Tensor:
        diff = pred.value - target
        return self._record("mse", (pred,), np.asarray((diff * diff).mean()), lambda g: (g * (2.0 / diff.size) * diff,))

    def add_scalar(self, x: Tensor, value: float) -> Tensor:
        """``x + value`` where ``value`` carries no gradient (e.g. a penalty term)."""
        return self._record("add_scalar", (x,), x.value + value, lambda g: (g,))

    # ---- weight transforms ----

    def cast_weight(self, w: Tensor, fmt: FpFormat | None) -> Tensor:
        """Operator-format cast with identity gradient (the cast is a.e. locally constant)."""
        w_hat = w.value if fmt is None else cast_fp(w.value, fmt).astype(w.value.dtype)
        return self._record("cast", (w,), w_hat, lambda g: (g,))

    def pqt_weight(self, w: Tensor, b_i: Tensor, state: PqtLayerState, cfg: PqtConfig, step: int) -> Tensor:
        """Sampled weight ``w_hat``; backward regenerates R and feeds ``w`` and ``b_i``."""
        if state.w is not w.value or state.b_i is not b_i.value:
            raise ValueError(f"layer {state.name}: tensors are not the state's arrays")
        w_hat = sample_weights(state, cfg, step)

        def back(g):
            grads = pqt_backward(g, state, cfg, step)
            return grads.w, grads.bi

        return self._record("pqt", (w, b_i), w_hat, back)
