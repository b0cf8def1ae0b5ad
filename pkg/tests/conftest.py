import numpy as np
import pytest

from deepthink import ModelConfig, ModelWeights, Tokenizer
from deepthink.model import LayerWeights
from deepthink.tokenizer import bytes_to_unicode


def make_config(n_layers=2, n_heads=2, d_model=16, vocab_size=64,
                max_positions=256, ffn_hidden=None):
    return ModelConfig(
        n_layers=n_layers,
        n_heads=n_heads,
        d_model=d_model,
        vocab_size=vocab_size,
        max_positions=max_positions,
        ffn_hidden=ffn_hidden if ffn_hidden is not None else 4 * d_model,
    )


def make_weights(config, seed=0, scale=0.2):
    rng = np.random.default_rng(seed)
    d = config.d_model

    def mat(*shape):
        return (rng.standard_normal(shape) * scale).astype(np.float32)

    def ones(n):
        return (1.0 + rng.standard_normal(n) * 0.02).astype(np.float32)

    layers = tuple(
        LayerWeights(
            w_q=mat(d, d), b_q=mat(d), w_k=mat(d, d), b_k=mat(d),
            w_v=mat(d, d), b_v=mat(d), w_o=mat(d, d), b_o=mat(d),
            ln1_g=ones(d), ln1_b=mat(d), ln2_g=ones(d), ln2_b=mat(d),
            ffn_w_in=mat(d, config.ffn_hidden), ffn_b_in=mat(config.ffn_hidden),
            ffn_w_out=mat(config.ffn_hidden, d), ffn_b_out=mat(d),
        )
        for _ in range(config.n_layers)
    )
    return ModelWeights(
        config=config,
        token_embedding=mat(config.vocab_size, d),
        position_embedding=mat(config.max_positions, d),
        layers=layers,
        lnf_g=ones(d),
        lnf_b=mat(d),
    )


def byte_level_tokenizer(merges=()):
    """Vocabulary of the 256 byte symbols plus any merged pieces."""
    b2u = bytes_to_unicode()
    vocab = {b2u[b]: b for b in range(256)}
    for a, b in merges:
        vocab.setdefault(a + b, len(vocab))
    return Tokenizer(vocab, list(merges))


def tokenizer_tables(merges=()):
    b2u = bytes_to_unicode()
    vocab = {b2u[b]: b for b in range(256)}
    for a, b in merges:
        vocab.setdefault(a + b, len(vocab))
    return {"vocab": vocab, "merges": [f"{a} {b}" for a, b in merges]}


@pytest.fixture
def tiny_config():
    return make_config()


@pytest.fixture
def tiny_weights(tiny_config):
    return make_weights(tiny_config, seed=0)


@pytest.fixture
def byte_tokenizer():
    return byte_level_tokenizer()


@pytest.fixture
def lm_weights(byte_tokenizer):
    """Tiny model whose vocabulary matches the byte tokenizer."""
    config = make_config(vocab_size=256)
    weights = make_weights(config, seed=1)
    weights.tokenizer = byte_tokenizer
    return weights
