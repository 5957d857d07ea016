import numpy as np
import pytest

from moodlyrics.corpus import synthesize_corpus
from moodlyrics.model import ModelConfig, init_model
from moodlyrics.tokenizer import TokenizerConfig, encode_corpus, train_wordpiece


@pytest.fixture(scope="session")
def synth32():
    """32-song separable corpus, 8 per mood."""
    return synthesize_corpus(seed=1, per_class=8)


@pytest.fixture(scope="session")
def tok_config():
    return TokenizerConfig(max_sequence_length=32, vocab_size=500)


@pytest.fixture(scope="session")
def vocab32(synth32, tok_config):
    return train_wordpiece(synth32, tok_config)


@pytest.fixture(scope="session")
def encoded32(synth32, vocab32, tok_config):
    return encode_corpus(synth32, vocab32, tok_config)


@pytest.fixture()
def tiny_params(vocab32):
    """Small float64 model for exhaustive numerical checks."""
    config = ModelConfig(
        vocab_size=len(vocab32),
        max_positions=32,
        num_layers=2,
        hidden_size=8,
        num_heads=2,
        ffn_size=16,
        dropout_rate=0.1,
        seed=5,
    )
    return init_model(config, dtype=np.float64)
