"""Intent classifier: transformer encoder -> BiLSTM -> inner attention,
concatenated with the frozen sentence embedding from the similarity model,
through a zero-initialized softmax head.

Training runs in two stages: first with the encoder frozen at a higher
learning rate, then end-to-end at a lower one. Few-shot helpers sample k
examples per intent and repeat training over several seeds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .argsim import ArgSimModel
from .encoders import BiLstm, InnerAttention, TransformerConfig, TransformerEncoder
from .tensor import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    load_checkpoint,
    parameter_hash,
    restore_parameters,
    save_checkpoint,
    set_requires_grad,
)
from .text import Vocabulary, tokenize

SPEECH_ACTS = ("stance", "exit", "level_up", "why", "prefer", "reject")

# fine-tuning epochs per training-set size: 10/20/30 examples per intent, or all
EPOCH_SCHEDULE = {10: 32, 20: 25, 30: 16}
FULL_DATA_EPOCHS = 8


def epochs_for(k: int | None) -> int:
    if k is None:
        return FULL_DATA_EPOCHS
    return EPOCH_SCHEDULE.get(k, FULL_DATA_EPOCHS)


class UnknownLabelError(ValueError):
    pass


@dataclass
class IntentConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 64
    lstm_hidden: int = 512
    d_w: int = 600
    r: int = 5
    dropout: float = 0.1
    combine: str = "concat"
    seed: int = 0


class IntentModel:
    """Parameter group theta3 is the transformer encoder; theta4 is the
    BiLSTM, attention pooling and classifier head. The attached similarity
    model must be frozen; its embedding joins the head input as a constant.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        labels: tuple[str, ...] | list[str],
        argsim: ArgSimModel,
        config: IntentConfig | None = None,
    ):
        if len(set(labels)) != len(labels):
            raise UnknownLabelError("intent labels must be unique")
        if not argsim.frozen:
            raise ValueError("the argument-similarity model must be frozen before use")
        self.vocab = vocab
        self.labels = tuple(labels)
        self.label_ids = {name: i for i, name in enumerate(self.labels)}
        self.argsim = argsim
        self.config = config or IntentConfig()
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
            prefix="intent.encoder",
        )
        self.bilstm = BiLstm(c.d_model, c.lstm_hidden, rng, prefix="intent.bilstm")
        self.attn = InnerAttention(2 * c.lstm_hidden, c.d_w, c.r, rng, prefix="intent.attn", combine=c.combine)
        head_in = self.attn.output_dim + argsim.config.embed_dim
        self.head_W = Tensor(np.zeros((head_in, len(self.labels))), requires_grad=True, name="intent.head.W")
        self.head_b = Tensor(np.zeros((1, len(self.labels))), requires_grad=True, name="intent.head.b")
        self._dropout_rng = np.random.default_rng(c.seed + 1)

    # -- parameters -----------------------------------------------------------

    def theta3(self) -> dict[str, Tensor]:
        return self.encoder.parameters()

    def theta4(self) -> dict[str, Tensor]:
        params = {**self.bilstm.parameters(), **self.attn.parameters()}
        params[self.head_W.name] = self.head_W
        params[self.head_b.name] = self.head_b
        return params

    def parameters(self) -> dict[str, Tensor]:
        return {**self.theta3(), **self.theta4()}

    # -- forward --------------------------------------------------------------

    def forward(self, text: str, training: bool = False) -> Tensor:
        """Probability distribution over the intent labels, shape (1, |labels|)."""
        c = self.config
        rng = self._dropout_rng if training else None
        seq = tokenize(text, self.vocab, c.max_len)
        h = self.encoder.forward(seq.ids, training=training, rng=rng)
        g = self.bilstm.forward(h)
        g = T.dropout(g, c.dropout, training, rng)
        u = self.attn.forward(g)
        s = Tensor(self.argsim.embed_cached(text))  # frozen feature, no gradient
        z = T.concat([u, s], axis=1)
        return T.softmax(T.add(T.matmul(z, self.head_W), self.head_b), axis=1)

    def classify(self, text: str) -> np.ndarray:
        """Eval-mode intent distribution as a plain vector."""
        return self.forward(text, training=False).data.reshape(-1)

    def predict(self, text: str) -> str:
        return self.labels[int(np.argmax(self.classify(text)))]

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        save_checkpoint(self.parameters(), path)
        self.vocab.save(path.with_suffix(path.suffix + ".vocab"))
        meta = {"config": asdict(self.config), "labels": list(self.labels)}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2), "utf-8")

    @classmethod
    def load(cls, path, argsim: ArgSimModel) -> "IntentModel":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text("utf-8"))
        vocab = Vocabulary.load(path.with_suffix(path.suffix + ".vocab"))
        model = cls(vocab, tuple(meta["labels"]), argsim, IntentConfig(**meta["config"]))
        restore_parameters(model.parameters(), load_checkpoint(path))
        return model


# -- training -----------------------------------------------------------------


@dataclass
class IntentTrainConfig:
    lr_stage1: float = 1e-4
    lr_stage2: float = 2e-5
    batch_size: int = 16
    stage1_epochs: int = 4
    stage2_epochs: int | None = None  # default: schedule by k
    k: int | None = None
    seed: int = 0


@dataclass
class IntentTrainReport:
    stage1_losses: list[float] = field(default_factory=list)
    stage2_losses: list[float] = field(default_factory=list)
    theta3_hash_start: str = ""
    theta3_hash_after_stage1: str = ""
    theta3_hash_after_stage2: str = ""
    batch_size: int = 0
    lr_stage1: float = 0.0
    lr_stage2: float = 0.0


def _run_stage(
    model: IntentModel,
    data: list[tuple[str, str]],
    params: dict[str, Tensor],
    lr: float,
    epochs: int,
    batch_size: int,
    seed: int,
    stage: int,
) -> list[float]:
    losses = []
    state = AdamState()
    for epoch in range(epochs):
        order = np.random.default_rng((seed, stage, epoch)).permutation(len(data))
        epoch_loss, n_batches = 0.0, 0
        for start in range(0, len(order), batch_size):
            batch = [data[i] for i in order[start : start + batch_size]]
            per_example = []
            for text, label in batch:
                probs = model.forward(text, training=True)
                per_example.append(T.reshape(T.cross_entropy(probs, model.label_ids[label]), (1,)))
            loss = T.mean(T.concat(per_example, axis=0))
            backward(loss)
            adam_step(params, state, lr)
            epoch_loss += float(loss.data)
            n_batches += 1
        losses.append(epoch_loss / n_batches)
    return losses


def train_two_stage(
    model: IntentModel,
    data: list[tuple[str, str]],
    config: IntentTrainConfig | None = None,
) -> IntentTrainReport:
    """Stage 1 trains theta4 with the encoder frozen; stage 2 fine-tunes all.

    The report carries per-epoch losses for both stages and bit-level hashes
    of theta3 before/after each stage, so freeze violations are detectable.
    """
    config = config or IntentTrainConfig()
    if not data:
        raise ValueError("train_two_stage: empty training data")
    for _, label in data:
        if label not in model.label_ids:
            raise UnknownLabelError(f"label {label!r} not in {model.labels}")

    stage2_epochs = config.stage2_epochs if config.stage2_epochs is not None else epochs_for(config.k)
    report = IntentTrainReport(
        batch_size=config.batch_size, lr_stage1=config.lr_stage1, lr_stage2=config.lr_stage2
    )
    theta3, theta4 = model.theta3(), model.theta4()
    report.theta3_hash_start = parameter_hash(theta3)

    set_requires_grad(theta3, False)
    try:
        report.stage1_losses = _run_stage(
            model, data, theta4, config.lr_stage1, config.stage1_epochs,
            config.batch_size, config.seed, stage=1,
        )
    finally:
        set_requires_grad(theta3, True)
    report.theta3_hash_after_stage1 = parameter_hash(theta3)

    report.stage2_losses = _run_stage(
        model, data, {**theta3, **theta4}, config.lr_stage2, stage2_epochs,
        config.batch_size, config.seed, stage=2,
    )
    report.theta3_hash_after_stage2 = parameter_hash(theta3)
    return report


# -- few-shot sampling and protocol --------------------------------------------


@dataclass
class FewShotSample:
    k: int
    seed: int
    indices_per_intent: dict[str, list[int]]

    def flat_indices(self) -> list[int]:
        out: list[int] = []
        for label in sorted(self.indices_per_intent):
            out.extend(self.indices_per_intent[label])
        return out


def sample_few_shot(dataset: list[tuple[str, str]], k: int, seed: int) -> FewShotSample:
    """Uniform per-intent sample without replacement; min(k, class size) each."""
    if k <= 0:
        raise ValueError(f"sample_few_shot: k must be positive, got {k}")
    by_label: dict[str, list[int]] = {}
    for i, (_, label) in enumerate(dataset):
        by_label.setdefault(label, []).append(i)
    selected: dict[str, list[int]] = {}
    for label_pos, label in enumerate(sorted(by_label)):
        pool = by_label[label]
        if k >= len(pool):
            selected[label] = list(pool)
            continue
        rng = np.random.default_rng((seed, label_pos))
        picks = rng.choice(len(pool), size=k, replace=False)
        selected[label] = sorted(pool[i] for i in picks)
    return FewShotSample(k=k, seed=seed, indices_per_intent=selected)


@dataclass
class FewShotResult:
    k: int | None
    per_seed_accuracy: list[float]

    @property
    def mean_x100(self) -> float:
        return float(np.mean(self.per_seed_accuracy) * 100.0)

    @property
    def std_x100(self) -> float:
        return float(np.std(self.per_seed_accuracy) * 100.0)  # population std

    def cell(self) -> str:
        return f"{self.mean_x100:.1f}±{self.std_x100:.1f}"


def run_few_shot_protocol(
    train_data: list[tuple[str, str]],
    test_data: list[tuple[str, str]],
    model_factory,
    k: int,
    seeds: int = 5,
    config: IntentTrainConfig | None = None,
) -> FewShotResult:
    """Train one model per seed on its k-shot sample; report accuracy over the
    shared test set as mean and population standard deviation (x100).
    """
    base = config or IntentTrainConfig()
    accuracies = []
    for seed in range(seeds):
        sample = sample_few_shot(train_data, k, seed)
        subset = [train_data[i] for i in sample.flat_indices()]
        model: IntentModel = model_factory(seed)
        cfg = IntentTrainConfig(
            lr_stage1=base.lr_stage1,
            lr_stage2=base.lr_stage2,
            batch_size=base.batch_size,
            stage1_epochs=base.stage1_epochs,
            stage2_epochs=base.stage2_epochs,
            k=k,
            seed=seed,
        )
        train_two_stage(model, subset, cfg)
        correct = sum(1 for text, label in test_data if model.predict(text) == label)
        accuracies.append(correct / len(test_data))
    return FewShotResult(k=k, per_seed_accuracy=accuracies)


def load_intent_csv(path) -> list[tuple[str, str]]:
    """Read a labeled-utterance CSV with header "text,category"."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["text", "category"]:
            raise ValueError(f"intent csv: expected header 'text,category', got {reader.fieldnames}")
        return [(row["text"], row["category"]) for row in reader]
