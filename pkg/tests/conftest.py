import numpy as np
import pytest

from argdial.argsim import ArgSimConfig, ArgSimModel
from argdial.intent import IntentConfig, IntentModel, SPEECH_ACTS
from argdial.synthetic import corpus_texts
from argdial.text import build_vocab


def tiny_argsim_config(**overrides):
    base = dict(
        d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=24,
        word_dim=8, lstm_hidden=4, d_w=8, r=2, embed_dim=8, seed=7,
    )
    base.update(overrides)
    return ArgSimConfig(**base)


def tiny_intent_config(**overrides):
    base = dict(
        d_model=16, n_layers=1, n_heads=2, d_ff=16, max_len=24,
        lstm_hidden=8, d_w=8, r=2, seed=11,
    )
    base.update(overrides)
    return IntentConfig(**base)


@pytest.fixture(scope="session")
def shared_vocab():
    return build_vocab(corpus_texts())


@pytest.fixture(scope="session")
def frozen_argsim(shared_vocab):
    model = ArgSimModel(shared_vocab, tiny_argsim_config())
    model.freeze()
    return model


def make_intent_model(vocab, argsim, seed=11):
    return IntentModel(vocab, SPEECH_ACTS, argsim, tiny_intent_config(seed=seed))
