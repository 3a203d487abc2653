"""Reusable neural blocks: transformer encoder, BiLSTM, inner-attention pooling.

All blocks operate on single sequences laid out as (T, feature) matrices and
expose ``parameters()`` dicts with hierarchical names so they serialize
through the checkpoint format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class SequenceLengthError(ValueError):
    """Input longer than the learned position table."""


def _uniform(shape, k: float, rng: np.random.Generator, name: str) -> Tensor:
    return Tensor(rng.uniform(-k, k, size=shape), requires_grad=True, name=name)


def _zeros(shape, name: str) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True, name=name)


def _ones(shape, name: str) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True, name=name)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Per-row standardization with learned gain and bias."""
    return T.add(T.mul(T.standardize(x), gain), bias)


@dataclass
class TransformerConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )


class TransformerEncoder:
    """Stack of self-attention + feed-forward sublayers over learned
    token and position embeddings. Output keeps the input length.
    """

    def __init__(self, config: TransformerConfig, rng: np.random.Generator, prefix: str = "encoder"):
        self.config = config
        self.prefix = prefix
        c = config
        k_emb = 0.05
        k = 1.0 / math.sqrt(c.d_model)
        self.token_emb = _uniform((c.vocab_size, c.d_model), k_emb, rng, f"{prefix}.token_emb")
        self.pos_emb = _uniform((c.max_len, c.d_model), k_emb, rng, f"{prefix}.pos_emb")
        self.layers = []
        for i in range(c.n_layers):
            p = f"{prefix}.layer{i}"
            layer = {
                "Wq": _uniform((c.d_model, c.d_model), k, rng, f"{p}.attn.Wq"),
                "Wk": _uniform((c.d_model, c.d_model), k, rng, f"{p}.attn.Wk"),
                "Wv": _uniform((c.d_model, c.d_model), k, rng, f"{p}.attn.Wv"),
                "Wo": _uniform((c.d_model, c.d_model), k, rng, f"{p}.attn.Wo"),
                "bq": _zeros((1, c.d_model), f"{p}.attn.bq"),
                "bk": _zeros((1, c.d_model), f"{p}.attn.bk"),
                "bv": _zeros((1, c.d_model), f"{p}.attn.bv"),
                "bo": _zeros((1, c.d_model), f"{p}.attn.bo"),
                "ln1_g": _ones((1, c.d_model), f"{p}.ln1.gain"),
                "ln1_b": _zeros((1, c.d_model), f"{p}.ln1.bias"),
                "W1": _uniform((c.d_model, c.d_ff), k, rng, f"{p}.ff.W1"),
                "b1": _zeros((1, c.d_ff), f"{p}.ff.b1"),
                "W2": _uniform((c.d_ff, c.d_model), 1.0 / math.sqrt(c.d_ff), rng, f"{p}.ff.W2"),
                "b2": _zeros((1, c.d_model), f"{p}.ff.b2"),
                "ln2_g": _ones((1, c.d_model), f"{p}.ln2.gain"),
                "ln2_b": _zeros((1, c.d_model), f"{p}.ln2.bias"),
            }
            self.layers.append(layer)

    def parameters(self) -> dict[str, Tensor]:
        params = {t.name: t for t in (self.token_emb, self.pos_emb)}
        for layer in self.layers:
            for t in layer.values():
                params[t.name] = t
        return params

    def forward(
        self,
        token_ids: list[int],
        training: bool = False,
        rng: np.random.Generator | None = None,
        attn_sink: list | None = None,
    ) -> Tensor:
        """Contextual states, shape (len(token_ids), d_model)."""
        c = self.config
        t_len = len(token_ids)
        if t_len > c.max_len:
            raise SequenceLengthError(
                f"sequence of length {t_len} exceeds position table ({c.max_len})"
            )
        h = T.add(T.take_rows(self.token_emb, token_ids), T.take_rows(self.pos_emb, range(t_len)))
        d_head = c.d_model // c.n_heads
        inv_sqrt = 1.0 / math.sqrt(d_head)
        for layer in self.layers:
            q = T.add(T.matmul(h, layer["Wq"]), layer["bq"])
            k = T.add(T.matmul(h, layer["Wk"]), layer["bk"])
            v = T.add(T.matmul(h, layer["Wv"]), layer["bv"])
            heads = []
            for i in range(c.n_heads):
                qi = T.narrow(q, 1, i * d_head, d_head)
                ki = T.narrow(k, 1, i * d_head, d_head)
                vi = T.narrow(v, 1, i * d_head, d_head)
                scores = T.scale(T.matmul(qi, T.transpose(ki)), inv_sqrt)
                alpha = T.softmax(scores, axis=1)  # rows: one distribution per query
                if attn_sink is not None:
                    attn_sink.append(alpha.data)
                heads.append(T.matmul(alpha, vi))
            attn = T.add(T.matmul(T.concat(heads, axis=1), layer["Wo"]), layer["bo"])
            attn = T.dropout(attn, c.dropout, training, rng)
            h = layer_norm(T.add(h, attn), layer["ln1_g"], layer["ln1_b"])
            ff = T.add(T.matmul(T.relu(T.add(T.matmul(h, layer["W1"]), layer["b1"])), layer["W2"]), layer["b2"])
            ff = T.dropout(ff, c.dropout, training, rng)
            h = layer_norm(T.add(h, ff), layer["ln2_g"], layer["ln2_b"])
        return h


class LstmCell:
    """Single-direction LSTM cell with fused gate weights, order [i, f, o, g]."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator, prefix: str):
        k = 1.0 / math.sqrt(hidden)
        self.hidden = hidden
        self.W = _uniform((input_dim, 4 * hidden), k, rng, f"{prefix}.W")
        self.U = _uniform((hidden, 4 * hidden), k, rng, f"{prefix}.U")
        bias = np.zeros((1, 4 * hidden))
        bias[0, hidden : 2 * hidden] = 1.0  # forget-gate bias
        self.b = Tensor(bias, requires_grad=True, name=f"{prefix}.b")

    def parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.W, self.U, self.b)}

    def step(self, x_t: Tensor, h_prev: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
        d = self.hidden
        z = T.add(T.add(T.matmul(x_t, self.W), T.matmul(h_prev, self.U)), self.b)
        i = T.sigmoid(T.narrow(z, 1, 0, d))
        f = T.sigmoid(T.narrow(z, 1, d, d))
        o = T.sigmoid(T.narrow(z, 1, 2 * d, d))
        g = T.tanh(T.narrow(z, 1, 3 * d, d))
        c_t = T.add(T.mul(f, c_prev), T.mul(i, g))
        h_t = T.mul(o, T.tanh(c_t))
        return h_t, c_t

    def run(self, rows: list[Tensor]) -> list[Tensor]:
        h = Tensor(np.zeros((1, self.hidden)))
        c = Tensor(np.zeros((1, self.hidden)))
        out = []
        for x_t in rows:
            h, c = self.step(x_t, h, c)
            out.append(h)
        return out


class BiLstm:
    """Forward and backward LSTM passes concatenated per position, (T, 2d)."""

    def __init__(self, input_dim: int, hidden: int, rng: np.random.Generator, prefix: str = "bilstm"):
        self.input_dim = input_dim
        self.hidden = hidden
        self.fwd = LstmCell(input_dim, hidden, rng, f"{prefix}.fwd")
        self.bwd = LstmCell(input_dim, hidden, rng, f"{prefix}.bwd")

    def parameters(self) -> dict[str, Tensor]:
        return {**self.fwd.parameters(), **self.bwd.parameters()}

    def forward(self, states: Tensor) -> Tensor:
        t_len = states.data.shape[0]
        if t_len == 0:
            raise ShapeError("bilstm: empty sequence")
        rows = [T.narrow(states, 0, t, 1) for t in range(t_len)]
        fwd = T.concat(self.fwd.run(rows), axis=0)
        bwd = T.concat(self.bwd.run(rows[::-1])[::-1], axis=0)
        return T.concat([fwd, bwd], axis=1)


class InnerAttention:
    """Multi-view attentive pooling of a (T, D) state matrix.

    Scores are W2 tanh(W1 H' + b1) + b2, softmaxed over positions; the r
    pooled vectors are concatenated (or averaged) into one fixed-size vector.
    """

    def __init__(
        self,
        input_dim: int,
        d_w: int = 600,
        r: int = 5,
        rng: np.random.Generator | None = None,
        prefix: str = "attn",
        combine: str = "concat",
    ):
        if combine not in ("concat", "mean"):
            raise ValueError(f"combine must be 'concat' or 'mean', got {combine!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.d_w = d_w
        self.r = r
        self.combine = combine
        k1 = 1.0 / math.sqrt(input_dim)
        k2 = 1.0 / math.sqrt(d_w)
        self.W1 = _uniform((d_w, input_dim), k1, rng, f"{prefix}.W1")
        self.b1 = _zeros((d_w, 1), f"{prefix}.b1")
        self.W2 = _uniform((r, d_w), k2, rng, f"{prefix}.W2")
        self.b2 = _zeros((r, 1), f"{prefix}.b2")

    @property
    def output_dim(self) -> int:
        return self.r * self.input_dim if self.combine == "concat" else self.input_dim

    def parameters(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.W1, self.b1, self.W2, self.b2)}

    def forward(self, states: Tensor, attn_sink: list | None = None) -> Tensor:
        """Pool (T, D) into (1, r*D) ('concat') or (1, D) ('mean')."""
        scores = T.add(
            T.matmul(self.W2, T.tanh(T.add(T.matmul(self.W1, T.transpose(states)), self.b1))),
            self.b2,
        )
        alpha = T.softmax(scores, axis=1)  # (r, T): each view sums to 1 over positions
        if attn_sink is not None:
            attn_sink.append(alpha.data)
        pooled = T.matmul(alpha, states)  # (r, D)
        if self.combine == "mean":
            return T.mean(pooled, axis=0, keepdims=True)
        return T.reshape(pooled, (1, self.r * self.input_dim))
