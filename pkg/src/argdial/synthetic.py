"""Seeded synthetic datasets for exercising the training pipelines.

The intent set marks each class with one unambiguous keyword inside filler
text; the similarity set scores sentence pairs by lexical overlap. Both are
fully deterministic given a seed, which keeps convergence tests honest.
"""

from __future__ import annotations

import numpy as np

from .argsim import SentencePair
from .intent import SPEECH_ACTS

INTENT_KEYWORDS = {
    "stance": "stance",
    "exit": "goodbye",
    "level_up": "back",
    "why": "why",
    "prefer": "prefer",
    "reject": "reject",
}

FILLER = (
    "please the could you me this that argument tell point about topic "
    "current now want would really i it is very much so on let us"
).split()

STS_WORDS = (
    "apple river cloud stone music garden window winter candle forest "
    "silver meadow harbor lantern marble velvet thunder crystal orchard copper "
    "breeze saddle willow ember canyon napkin pepper salmon turnip walnut"
).split()


def make_intent_dataset(n_per_intent: int, seed: int) -> list[tuple[str, str]]:
    """Keyword-separable utterances, ``n_per_intent`` per speech act."""
    rng = np.random.default_rng(seed)
    data: list[tuple[str, str]] = []
    for label in SPEECH_ACTS:
        keyword = INTENT_KEYWORDS[label]
        for _ in range(n_per_intent):
            n_fill = int(rng.integers(3, 7))
            words = [str(w) for w in rng.choice(FILLER, size=n_fill)]
            slot = int(rng.integers(0, len(words) + 1))
            words.insert(slot, keyword)
            data.append((" ".join(words), label))
    return data


def overlap_score(s1: str, s2: str) -> float:
    """Jaccard word overlap scaled to the [0, 5] similarity range."""
    a, b = set(s1.split()), set(s2.split())
    if not a and not b:
        return 5.0
    return 5.0 * len(a & b) / len(a | b)


def make_sts_dataset(n_pairs: int, seed: int, sentence_len: tuple[int, int] = (4, 7)) -> list[SentencePair]:
    """Sentence pairs labeled by lexical overlap, spanning the score range."""
    rng = np.random.default_rng(seed)
    lo, hi = sentence_len
    pairs: list[SentencePair] = []
    while len(pairs) < n_pairs:
        n = int(rng.integers(lo, hi))
        first = list(rng.choice(STS_WORDS, size=n, replace=False))
        keep = int(rng.integers(0, n + 1))
        kept = list(rng.choice(first, size=keep, replace=False))
        others = [w for w in STS_WORDS if w not in first]
        second = kept + list(rng.choice(others, size=n - keep, replace=False))
        rng.shuffle(second)
        s1, s2 = " ".join(first), " ".join(second)
        pairs.append(SentencePair(s1, s2, overlap_score(s1, s2)))
    return pairs


def corpus_texts() -> list[str]:
    """Every word either generator can emit, for vocabulary building."""
    return [
        " ".join(FILLER),
        " ".join(STS_WORDS),
        " ".join(INTENT_KEYWORDS.values()),
    ]
