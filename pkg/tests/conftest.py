import datetime as dt

import numpy as np
import pytest
import torch

from xrisk.corpus import RawFiling, build_vocabulary, encode_document
from xrisk.encoder import EncoderConfig
from xrisk.model import ModelConfig, RiskClassifier

WORDS = [f"w{i}" for i in range(20)]


def filing(doc_id, text, year=2005):
    return RawFiling(doc_id, "c-" + doc_id, dt.date(year, 2, 1), year, text)


def random_text(rng, n_sentences, lo=2, hi=8, words=WORDS):
    return " ".join(" ".join(rng.choice(words, int(rng.integers(lo, hi + 1)))) + "."
                    for _ in range(n_sentences))


@pytest.fixture
def vocab():
    return build_vocabulary([" ".join(WORDS)], 100)


def tiny_config(vocab_size, d_model=16, n_layers=2, n_heads=2, d_ff=32, T=12, L=6, a=8,
                dropout=0.1, seed=0):
    enc = EncoderConfig(d_model=d_model, n_layers=n_layers, n_heads=n_heads, d_ff=d_ff, T=T,
                        vocab_size=vocab_size, dropout=dropout, seed=seed)
    return ModelConfig(enc, L=L, a=a, seed=seed)


@pytest.fixture
def tiny_model(vocab):
    return RiskClassifier(tiny_config(len(vocab))).double().eval()


@pytest.fixture
def two_docs(vocab):
    rng = np.random.default_rng(0)
    return [encode_document(filing("d0", random_text(rng, 4)), vocab, T=12, L=6),
            encode_document(filing("d1", random_text(rng, 6)), vocab, T=12, L=6)]


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def make_trace(rng, doc_id="x", L=6, T=8, label=None, words=WORDS[:8]):
    """Random but well-formed ForwardTrace: normalized sentence weights, a
    [CLS]/[SEP] frame per sentence and summed attention that averages 1."""
    from xrisk.labeling import Label
    from xrisk.model import ForwardTrace

    n = int(rng.integers(1, L + 1))
    sentence_mask = np.array([1] * n + [0] * (L - n))
    alphas = np.zeros(L)
    alphas[:n] = rng.dirichlet(np.ones(n))
    attention_mask = np.zeros((L, T), dtype=np.int64)
    summed = np.zeros((L, T))
    tokens = [["[PAD]"] * T for _ in range(L)]
    for s in range(n):
        k = int(rng.integers(1, T - 1))
        attention_mask[s, : k + 2] = 1
        tokens[s][0], tokens[s][k + 1] = "[CLS]", "[SEP]"
        for j in range(1, k + 1):
            tokens[s][j] = str(rng.choice(words))
        w = rng.dirichlet(np.ones(k + 2)) * (k + 2)
        summed[s, : k + 2] = np.round(w, 1)
    prob = float(rng.uniform(0.01, 0.99))
    if label is None:
        label = Label.RISKY if prob >= 0.5 else Label.NON_RISKY
    return ForwardTrace(doc_id, alphas, summed, np.zeros((L, T), dtype=np.int64), attention_mask,
                        sentence_mask, float(np.log(prob / (1 - prob))), prob, label, tokens)
