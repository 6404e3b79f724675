"""Document-level risk classifier.

Sentence [CLS] vectors from :class:`SentenceEncoder` go through a bidirectional
GRU, an additive sentence-attention layer and a linear head.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .corpus import SPECIAL_TOKENS, EncodedDocument, Vocabulary
from .encoder import EncoderConfig, SentenceEncoder, cls_embedding, summed_word_attention
from .errors import ConfigurationError, InputError, NumericalError, UndefinedAttentionError
from .labeling import Label


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    L: int = 50
    a: int = 100
    seed: int = 0

    @property
    def gru_hidden(self) -> int:
        return self.encoder.d_model

    def validate(self) -> "ModelConfig":
        self.encoder.validate()
        if self.a < 1:
            raise ConfigurationError(f"a must be >= 1, got {self.a}", key="a")
        if self.L < 1:
            raise ConfigurationError(f"L must be >= 1, got {self.L}", key="L")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        return cls(encoder=EncoderConfig(**d.pop("encoder")), **d)


class GRUCell(nn.Module):
    """z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
    h~ = tanh(Wh x + Uh (r * h) + bh), h' = (1 - z) * h + z * h~."""

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.hidden_size = hidden_size
        self.input_proj = nn.Linear(input_size, 3 * hidden_size)
        self.recurrent_gates = nn.Linear(hidden_size, 2 * hidden_size, bias=False)
        self.recurrent_candidate = nn.Linear(hidden_size, hidden_size, bias=False)
        bound = 1.0 / math.sqrt(hidden_size)
        for p in self.parameters():
            nn.init.uniform_(p, -bound, bound)

    def forward(self, x, h):
        xz, xr, xh = self.input_proj(x).chunk(3, dim=-1)
        hz, hr = self.recurrent_gates(h).chunk(2, dim=-1)
        z = torch.sigmoid(xz + hz)
        r = torch.sigmoid(xr + hr)
        candidate = torch.tanh(xh + self.recurrent_candidate(r * h))
        return (1 - z) * h + z * candidate


def gru_cell(cell: GRUCell, x, h_prev):
    h = cell(x, h_prev)
    if not torch.isfinite(h).all():
        raise NumericalError("non-finite GRU state")
    return h


class BiGRU(nn.Module):
    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.forward_cell = GRUCell(input_size, hidden_size)
        self.backward_cell = GRUCell(input_size, hidden_size)

    def _run(self, cell, seq, real, steps):
        h = seq.new_zeros(seq.shape[0], cell.hidden_size)
        outs = [None] * seq.shape[1]
        for s in steps:
            m = real[:, s, None]
            h = torch.where(m, cell(seq[:, s], h), h)
            outs[s] = torch.where(m, h, torch.zeros_like(h))
        return torch.stack(outs, dim=1)

    def forward(self, seq, sentence_mask):
        """``seq`` is ``(B, L, d)``; recurrences skip padded sentences, whose rows are zero."""
        real = sentence_mask.bool()
        length = seq.shape[1]
        fwd = self._run(self.forward_cell, seq, real, range(length))
        bwd = self._run(self.backward_cell, seq, real, reversed(range(length)))
        return torch.cat([fwd, bwd], dim=-1)


def bigru_forward(gru: BiGRU, cls_sequence, sentence_mask):
    return gru(cls_sequence, sentence_mask)


class SentenceAttention(nn.Module):
    def __init__(self, in_features: int, attention_dim: int):
        super().__init__()
        self.projection = nn.Linear(in_features, attention_dim)
        self.context = nn.Parameter(torch.empty(attention_dim))
        bound = 1.0 / math.sqrt(attention_dim)
        nn.init.uniform_(self.context, -bound, bound)

    def scores(self, H):
        return torch.tanh(self.projection(H)) @ self.context

    def forward(self, H, sentence_mask):
        real = sentence_mask.bool()
        if not real.any(dim=-1).all():
            raise UndefinedAttentionError("document has no real sentences")
        scores = self.scores(H).masked_fill(~real, float("-inf"))
        return torch.softmax(scores, dim=-1)


def sentence_attention(attention: SentenceAttention, H, sentence_mask):
    return attention(H, sentence_mask)


def masked_softmax(scores, mask):
    scores = torch.as_tensor(scores)
    mask = torch.as_tensor(mask).bool()
    if not mask.any(dim=-1).all():
        raise UndefinedAttentionError("no unmasked entries")
    return torch.softmax(scores.masked_fill(~mask, float("-inf")), dim=-1)


def document_embedding(alpha, H):
    return (alpha.unsqueeze(-1) * H).sum(dim=-2)


def classify(logit) -> tuple[float, float, Label]:
    logit = float(logit)
    prob = 1.0 / (1.0 + math.exp(-logit)) if logit >= 0 else math.exp(logit) / (1.0 + math.exp(logit))
    return logit, prob, Label.RISKY if prob >= 0.5 else Label.NON_RISKY


def bce_loss(logit, target, pos_weight: float = 1.0):
    """Mean binary cross-entropy on logits, ``max(z,0) - z*y + log(1+exp(-|z|))``."""
    z = torch.as_tensor(logit)
    if not z.is_floating_point():
        z = z.double()
    y = torch.as_tensor(target, dtype=z.dtype)
    per = torch.clamp(z, min=0) - z * y + torch.log1p(torch.exp(-z.abs()))
    if pos_weight != 1.0:
        per = per * torch.where(y == 1, torch.as_tensor(pos_weight, dtype=z.dtype), torch.ones_like(y))
    return per.mean()


@dataclass
class Batch:
    token_ids: torch.Tensor
    attention_mask: torch.Tensor
    sentence_mask: torch.Tensor


def collate(docs: Sequence[EncodedDocument]) -> Batch:
    shapes = {d.shape for d in docs}
    if len(shapes) != 1:
        raise InputError(f"documents in a batch must share (L, T), got {sorted(shapes)}")
    return Batch(torch.from_numpy(np.stack([d.token_ids for d in docs])),
                 torch.from_numpy(np.stack([d.attention_mask for d in docs])),
                 torch.from_numpy(np.stack([d.sentence_mask for d in docs])))


@dataclass
class ForwardOutput:
    logits: torch.Tensor
    alphas: torch.Tensor
    summed_attention: torch.Tensor | None = None


class RiskClassifier(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg.validate()
        d = cfg.encoder.d_model
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.encoder = SentenceEncoder(cfg.encoder)
            self.gru = BiGRU(d, cfg.gru_hidden)
            self.attention = SentenceAttention(2 * cfg.gru_hidden, cfg.a)
            self.classifier = nn.Linear(2 * cfg.gru_hidden, 1)

    def encoder_parameters(self):
        return list(self.encoder.parameters())

    def head_parameters(self):
        return [p for name, p in self.named_parameters() if not name.startswith("encoder.")]

    def forward(self, batch: Batch, with_word_attention: bool = False) -> ForwardOutput:
        real = batch.sentence_mask.bool()
        if not real.any(dim=-1).all():
            raise UndefinedAttentionError("document has no real sentences")
        b, length, t = batch.token_ids.shape
        states, stacks = self.encoder(batch.token_ids[real], batch.attention_mask[real])
        cls = cls_embedding(states)
        idx = real.nonzero(as_tuple=True)
        seq = cls.new_zeros(b, length, cls.shape[-1]).index_put(idx, cls)
        H = self.gru(seq, batch.sentence_mask)
        alphas = self.attention(H, batch.sentence_mask)
        logits = self.classifier(document_embedding(alphas, H)).squeeze(-1)
        summed = None
        if with_word_attention:
            flat = summed_word_attention(stacks, batch.attention_mask[real],
                                         layer=self.config.encoder.attention_layer)
            summed = flat.new_zeros(b, length, t).index_put(idx, flat)
        return ForwardOutput(logits, alphas, summed)


@dataclass
class ForwardTrace:
    doc_id: str
    sentence_alphas: np.ndarray
    summed_attention: np.ndarray
    token_ids: np.ndarray
    attention_mask: np.ndarray
    sentence_mask: np.ndarray
    logit: float
    probability: float
    label: Label
    tokens: list[list[str]] | None = None
    texts: tuple[str, ...] = ()

    @property
    def n_sentences(self) -> int:
        return int(self.sentence_mask.sum())


def _tokens(ids: np.ndarray, vocab: Vocabulary | None):
    if vocab is None:
        return None
    return [[vocab.tokens[i] for i in row] for row in ids.tolist()]


def predict_batch(model: RiskClassifier, docs: Sequence[EncodedDocument],
                  vocab: Vocabulary | None = None) -> list[ForwardTrace]:
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            out = model(collate(docs), with_word_attention=True)
    finally:
        model.train(was_training)
    traces = []
    for i, doc in enumerate(docs):
        logit, prob, label = classify(out.logits[i])
        traces.append(ForwardTrace(
            doc_id=doc.doc_id,
            sentence_alphas=out.alphas[i].double().numpy(),
            summed_attention=out.summed_attention[i].double().numpy(),
            token_ids=doc.token_ids, attention_mask=doc.attention_mask,
            sentence_mask=doc.sentence_mask, logit=logit, probability=prob, label=label,
            tokens=_tokens(doc.token_ids, vocab), texts=doc.texts))
    return traces


def predict_document(model: RiskClassifier, doc: EncodedDocument,
                     vocab: Vocabulary | None = None) -> ForwardTrace:
    return predict_batch(model, [doc], vocab)[0]


def predict(model: RiskClassifier, docs: Sequence[EncodedDocument], vocab=None,
            batch_size: int = 64) -> list[ForwardTrace]:
    traces = []
    for start in range(0, len(docs), batch_size):
        traces.extend(predict_batch(model, docs[start:start + batch_size], vocab))
    return traces


def batch_loss(model: RiskClassifier, docs, targets, pos_weight: float = 1.0):
    out = model(collate(docs))
    y = torch.as_tensor(np.asarray(targets), dtype=out.logits.dtype)
    return bce_loss(out.logits, y, pos_weight)


def compute_gradients(model: RiskClassifier, docs: Sequence[EncodedDocument], targets,
                      pos_weight: float = 1.0) -> dict[str, torch.Tensor]:
    """Gradients of the mean BCE over ``docs`` for every named parameter."""
    if not docs:
        raise InputError("empty batch")
    params = dict(model.named_parameters())
    loss = batch_loss(model, docs, targets, pos_weight)
    grads = torch.autograd.grad(loss, list(params.values()), allow_unused=True)
    out = {}
    for (name, p), g in zip(params.items(), grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise NumericalError(f"non-finite gradient for {name}")
        out[name] = g
    return out


def is_special(token: str) -> bool:
    return token in SPECIAL_TOKENS
