"""Dual-branch sentence-embedding model scored with cosine similarity.

Branch A runs the transformer encoder and pools it with inner attention;
branch B runs static word embeddings through a BiLSTM with its own pooling.
Each branch is projected to a shared dimension, added, and passed through a
final linear layer. Training regresses the cosine of two sentence embeddings
onto graded similarity labels; inference retrieves the closest candidate
argument for an utterance.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .encoders import BiLstm, InnerAttention, TransformerConfig, TransformerEncoder
from .tensor import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    load_checkpoint,
    restore_parameters,
    save_checkpoint,
    set_requires_grad,
)
from .text import PAD, EmbeddingTable, Vocabulary, random_embeddings, tokenize


class FrozenModelError(RuntimeError):
    """Parameter mutation attempted on a frozen model."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class SentencePair:
    """Two sentences with a graded similarity score in [0, 5]."""

    sentence_1: str
    sentence_2: str
    score: float

    def __post_init__(self):
        if not self.sentence_1 or not self.sentence_2:
            raise ValueError("sentence pair: both sentences must be nonempty")
        if not 0.0 <= self.score <= 5.0:
            raise ValueError(f"sentence pair: score {self.score} outside [0, 5]")


def load_sts(path) -> list[SentencePair]:
    """Read tab-separated similarity pairs: ... score <TAB> s1 <TAB> s2.

    Extra leading metadata columns are tolerated; the last three fields count.
    """
    pairs: list[SentencePair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise ValueError(f"line {lineno}: expected at least 3 tab-separated fields")
            score_str, s1, s2 = fields[-3], fields[-2], fields[-1]
            try:
                score = float(score_str)
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric score {score_str!r}")
            try:
                pairs.append(SentencePair(s1, s2, score))
            except ValueError as err:
                raise ValueError(f"line {lineno}: {err}")
    return pairs


@dataclass
class ArgSimConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    word_dim: int = 300
    lstm_hidden: int = 512
    d_w: int = 600
    r: int = 5
    embed_dim: int = 256
    dropout: float = 0.1
    combine: str = "concat"
    embedding_trainable: bool = True
    embedding_init: float = 0.05
    seed: int = 0


class ArgSimModel:
    """Sentence embedder with parameter groups theta1 (transformer branch)
    and theta2 (everything else). ``freeze`` pins all parameters; a frozen
    model serves concurrent reads and caches eval-mode embeddings.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        config: ArgSimConfig | None = None,
        embedding: EmbeddingTable | None = None,
    ):
        self.vocab = vocab
        self.config = config or ArgSimConfig()
        c = self.config
        rng = np.random.default_rng(c.seed)
        self.encoder = TransformerEncoder(
            TransformerConfig(
                vocab_size=len(vocab),
                d_model=c.d_model,
                n_layers=c.n_layers,
                n_heads=c.n_heads,
                d_ff=c.d_ff,
                max_len=c.max_len,
                dropout=c.dropout,
            ),
            rng,
            prefix="argsim.encoder",
        )
        self.attn_a = InnerAttention(c.d_model, c.d_w, c.r, rng, prefix="argsim.attn_a", combine=c.combine)
        if embedding is None:
            embedding = random_embeddings(
                vocab, c.word_dim, rng, trainable=c.embedding_trainable, init_range=c.embedding_init
            )
        if embedding.dim != c.word_dim:
            raise ValueError(f"embedding dim {embedding.dim} differs from configured {c.word_dim}")
        self.embedding = embedding
        self.bilstm = BiLstm(c.word_dim, c.lstm_hidden, rng, prefix="argsim.bilstm")
        self.attn_b = InnerAttention(
            2 * c.lstm_hidden, c.d_w, c.r, rng, prefix="argsim.attn_b", combine=c.combine
        )

        def proj(n_in, name):
            k = 1.0 / math.sqrt(n_in)
            return (
                Tensor(rng.uniform(-k, k, (n_in, c.embed_dim)), requires_grad=True, name=f"{name}.W"),
                Tensor(np.zeros((1, c.embed_dim)), requires_grad=True, name=f"{name}.b"),
            )

        self.proj_a_W, self.proj_a_b = proj(self.attn_a.output_dim, "argsim.proj_a")
        self.proj_b_W, self.proj_b_b = proj(self.attn_b.output_dim, "argsim.proj_b")
        self.fuse_W, self.fuse_b = proj(c.embed_dim, "argsim.fuse")

        self.frozen = False
        self._dropout_rng = np.random.default_rng(c.seed + 1)
        self._embed_cache: dict[str, np.ndarray] = {}

    # -- parameter bookkeeping ------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        return {**self.theta1(), **self.theta2()}

    def theta1(self) -> dict[str, Tensor]:
        """Transformer-branch encoder parameters."""
        return self.encoder.parameters()

    def theta2(self) -> dict[str, Tensor]:
        """Attention, embedding, BiLSTM, projection and fusion parameters."""
        params = {
            **self.attn_a.parameters(),
            **self.bilstm.parameters(),
            **self.attn_b.parameters(),
        }
        params.update(self.embedding.parameters("argsim.embedding"))
        for t in (self.proj_a_W, self.proj_a_b, self.proj_b_W, self.proj_b_b, self.fuse_W, self.fuse_b):
            params[t.name] = t
        return params

    def freeze(self) -> None:
        set_requires_grad(self.parameters(), False)
        self.frozen = True

    def _require_mutable(self, action: str) -> None:
        if self.frozen:
            raise FrozenModelError(f"{action}: model is frozen")

    # -- forward passes -------------------------------------------------------

    def embed_sentence(self, text: str, training: bool = False) -> Tensor:
        """Fixed-size sentence embedding, shape (1, embed_dim)."""
        c = self.config
        rng = self._dropout_rng if training else None
        seq = tokenize(text, self.vocab, c.max_len)

        h_a = self.encoder.forward(seq.ids, training=training, rng=rng)
        s_a = T.add(T.matmul(self.attn_a.forward(h_a), self.proj_a_W), self.proj_a_b)

        content = seq.ids[1:-1]
        if not content:  # empty utterance: all-zero [PAD] row keeps the branch defined
            content = [self.vocab.token_to_id[PAD]]
        words = T.take_rows(self.embedding.matrix, content)
        h_b = self.bilstm.forward(words)
        h_b = T.dropout(h_b, c.dropout, training, rng)
        s_b = T.add(T.matmul(self.attn_b.forward(h_b), self.proj_b_W), self.proj_b_b)

        return T.add(T.matmul(T.add(s_a, s_b), self.fuse_W), self.fuse_b)

    def embed_cached(self, text: str) -> np.ndarray:
        """Eval-mode embedding as a plain array; cached once frozen."""
        if self.frozen:
            hit = self._embed_cache.get(text)
            if hit is None:
                hit = self._embed_cache[text] = self.embed_sentence(text).data
            return hit
        return self.embed_sentence(text).data

    def score_pair(self, s1: str, s2: str) -> float:
        """Cosine similarity of the two sentence embeddings, in [-1, 1]."""
        if not s1 or not s2:
            raise ValueError("score_pair: sentences must be nonempty")
        a, b = self.embed_cached(s1), self.embed_cached(s2)
        return float(T.cosine_similarity(Tensor(a), Tensor(b)).data)

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        save_checkpoint(self.parameters(), path)
        self.vocab.save(path.with_suffix(path.suffix + ".vocab"))
        meta = {"config": asdict(self.config), "frozen": self.frozen}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2), "utf-8")

    @classmethod
    def load(cls, path) -> "ArgSimModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text("utf-8"))
        vocab = Vocabulary.load(path.with_suffix(path.suffix + ".vocab"))
        model = cls(vocab, ArgSimConfig(**meta["config"]))
        restore_parameters(model.parameters(), load_checkpoint(path))
        if meta.get("frozen"):
            model.freeze()
        return model


@dataclass
class StsTrainConfig:
    lr: float = 2e-5
    batch_size: int = 16
    epochs: int = 8
    seed: int = 0
    freeze_after: bool = True


@dataclass
class StsTrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    n_pairs: int = 0
    lr: float = 0.0
    batch_size: int = 0


def train_sts(model: ArgSimModel, pairs: list[SentencePair], config: StsTrainConfig | None = None) -> StsTrainReport:
    """Minimize MSE between cosine(embeddings) and gold/5 over shuffled batches.

    Gold scores live in [0, 5] while cosine lives in [-1, 1]; the regression
    target is gold/5. The model is frozen when training completes.
    """
    config = config or StsTrainConfig()
    model._require_mutable("train_sts")
    if not pairs:
        raise ValueError("train_sts: empty training set")

    report = StsTrainReport(n_pairs=len(pairs), lr=config.lr, batch_size=config.batch_size)
    params = model.parameters()
    state = AdamState()
    for epoch in range(config.epochs):
        order = np.random.default_rng((config.seed, epoch)).permutation(len(pairs))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            losses = []
            for pair in batch:
                e1 = model.embed_sentence(pair.sentence_1, training=True)
                e2 = model.embed_sentence(pair.sentence_2, training=True)
                cos = T.cosine_similarity(e1, e2)
                losses.append(T.mse(cos, pair.score / 5.0))
            loss = T.mean(T.concat([T.reshape(l, (1,)) for l in losses], axis=0))
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value} at epoch {epoch + 1}, batch {n_batches + 1}"
                )
            backward(loss)
            adam_step(params, state, config.lr)
            epoch_loss += value
            n_batches += 1
        report.epoch_losses.append(epoch_loss / n_batches)
    if config.freeze_after:
        model.freeze()
    return report


def nearest_argument(model: ArgSimModel, utterance: str, candidates: list[str]) -> tuple[int, float]:
    """Index and cosine score of the closest candidate; ties pick the lowest index."""
    if not candidates:
        raise ValueError("nearest_argument: empty candidate list")
    u = Tensor(model.embed_cached(utterance))
    best_idx, best_score = 0, -math.inf
    for i, cand in enumerate(candidates):
        score = float(T.cosine_similarity(u, Tensor(model.embed_cached(cand))).data)
        if score > best_score:
            best_idx, best_score = i, score
    return best_idx, best_score
