"""Tokenization, vocabulary handling and static word-embedding loading.

The tokenizer is deliberately simple: lowercase, split on whitespace and
isolate punctuation, no subword merges. Anything that needs a different
scheme can pass its own callable wherever a tokenizer is accepted; the
downstream models only consume token id sequences.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)

DEFAULT_MAX_LEN = 64

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class EmbeddingParseError(ValueError):
    """Malformed word-embedding file; message carries the line number."""


class VocabularyError(ValueError):
    pass


def split_words(text: str) -> list[str]:
    """Lowercase and split into word / single-punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Token -> dense id map with the four reserved tokens always present."""

    token_to_id: dict[str, int]

    def __post_init__(self):
        for i, tok in enumerate(RESERVED):
            if self.token_to_id.get(tok) != i:
                raise VocabularyError(f"reserved token {tok} must map to id {i}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise VocabularyError("vocabulary ids must be dense from 0")

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        """Total lookup: unknown tokens map to [UNK]."""
        return self.token_to_id.get(token, self.token_to_id[UNK])

    def tokens(self) -> list[str]:
        """Tokens ordered by id."""
        inverse = {i: t for t, i in self.token_to_id.items()}
        return [inverse[i] for i in range(len(inverse))]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok, idx in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
                fh.write(f"{tok}\t{idx}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        mapping: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, idx = line.partition("\t")
                mapping[tok] = int(idx)
        return cls(mapping)


@dataclass
class TokenSequence:
    """Token ids framed by [CLS]/[SEP], with the source strings retained."""

    ids: list[int]
    tokens: list[str]
    text: str

    def __post_init__(self):
        if len(self.ids) < 2:
            raise VocabularyError("token sequence must at least contain [CLS] and [SEP]")

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str, vocab: Vocabulary, max_len: int = DEFAULT_MAX_LEN) -> TokenSequence:
    """Lowercase, punctuation-split, [CLS]/[SEP]-framed and truncated.

    Out-of-vocabulary words keep their surface string in ``tokens`` but map
    to [UNK] in ``ids``, so re-tokenizing the joined tokens is id-stable.
    """
    words = split_words(text)
    if len(words) > max_len - 2:
        words = words[: max_len - 2]
    tokens = [CLS, *words, SEP]
    ids = [vocab.token_to_id[CLS], *(vocab.id_of(w) for w in words), vocab.token_to_id[SEP]]
    return TokenSequence(ids=ids, tokens=tokens, text=text)


def build_vocab(corpus: list[str], min_count: int = 1) -> Vocabulary:
    """Frequency-then-lexicographic vocabulary over tokenized documents."""
    counts: dict[str, int] = {}
    for doc in corpus:
        for tok in split_words(doc):
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count and tok not in RESERVED),
        key=lambda tok: (-counts[tok], tok),
    )
    mapping = {tok: i for i, tok in enumerate(RESERVED)}
    for tok in kept:
        mapping[tok] = len(mapping)
    return Vocabulary(mapping)


@dataclass
class EmbeddingTable:
    """One row per vocabulary id; [PAD] stays all-zero while frozen."""

    vocab: Vocabulary
    matrix: Tensor
    trainable: bool
    coverage: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        rows, self.dim = self.matrix.data.shape
        if rows != len(self.vocab):
            raise VocabularyError(
                f"embedding rows ({rows}) must match vocabulary size ({len(self.vocab)})"
            )

    def parameters(self, prefix: str = "embedding") -> dict[str, Tensor]:
        return {f"{prefix}.matrix": self.matrix} if self.trainable else {}


def random_embeddings(
    vocab: Vocabulary,
    dim: int,
    rng: np.random.Generator,
    trainable: bool = True,
    init_range: float = 0.05,
) -> EmbeddingTable:
    matrix = rng.uniform(-init_range, init_range, size=(len(vocab), dim))
    matrix[vocab.token_to_id[PAD]] = 0.0
    return EmbeddingTable(
        vocab=vocab,
        matrix=Tensor(matrix, requires_grad=trainable, name="embedding.matrix"),
        trainable=trainable,
        coverage=0.0,
    )


def load_embeddings(
    path,
    vocab: Vocabulary,
    rng: np.random.Generator,
    expected_dim: int | None = None,
    trainable: bool = True,
) -> EmbeddingTable:
    """Read a word2vec-text file and build the table for ``vocab``.

    Header line is "count dim". Rows for words outside the vocabulary are
    skipped; vocabulary words missing from the file get seeded uniform
    (-0.05, 0.05) rows. ``coverage`` reports the hit fraction over the
    non-reserved vocabulary.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 2:
            raise EmbeddingParseError(f"line 1: expected 'count dim' header, got {header!r}")
        try:
            declared_count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise EmbeddingParseError(f"line 1: non-integer header fields in {header!r}")
        if expected_dim is not None and dim != expected_dim:
            raise EmbeddingParseError(
                f"embedding dim {dim} does not match configured dim {expected_dim}"
            )

        matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), dim))
        hit: set[int] = set()
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split(" ")
            if len(fields) != dim + 1:
                raise EmbeddingParseError(
                    f"line {lineno}: expected word + {dim} floats, got {len(fields)} fields"
                )
            word = fields[0]
            if word not in vocab:
                continue
            try:
                vector = np.array([float(x) for x in fields[1:]])
            except ValueError:
                raise EmbeddingParseError(f"line {lineno}: non-numeric vector component")
            idx = vocab.token_to_id[word]
            matrix[idx] = vector
            hit.add(idx)

    matrix[vocab.token_to_id[PAD]] = 0.0
    content_ids = [i for t, i in vocab.token_to_id.items() if t not in RESERVED]
    coverage = len(hit & set(content_ids)) / len(content_ids) if content_ids else 0.0
    del declared_count  # informational only; files in the wild often disagree
    return EmbeddingTable(
        vocab=vocab,
        matrix=Tensor(matrix, requires_grad=trainable, name="embedding.matrix"),
        trainable=trainable,
        coverage=coverage,
    )


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Write the table back out in word2vec text format."""
    tokens = table.vocab.tokens()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(tokens)} {table.dim}\n")
        for tok, row in zip(tokens, table.matrix.data):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")
