"""BERT-style sentence encoder with attention extraction.

Post-layer-norm transformer with learned positions and GELU. Every forward
pass can return the attention probabilities of every layer and head, which
feed the summed word attention used for word-level explanations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigurationError, InputError, NumericalError

LAYER_NORM_EPS = 1e-12
INIT_STD = 0.02


@dataclass
class EncoderConfig:
    d_model: int = 768
    n_layers: int = 12
    n_heads: int = 12
    d_ff: int = 3072
    T: int = 64
    vocab_size: int = 30522
    dropout: float = 0.1
    seed: int = 0
    attention_layer: int = -1

    def validate(self) -> "EncoderConfig":
        for key in ("d_model", "n_layers", "n_heads", "d_ff", "T", "vocab_size"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1, got {getattr(self, key)}", key=key)
        if self.T < 2:
            raise ConfigurationError(f"T must be >= 2, got {self.T}", key="T")
        if self.d_model % self.n_heads:
            raise ConfigurationError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}", key="n_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must lie in [0, 1), got {self.dropout}", key="dropout")
        if not -self.n_layers <= self.attention_layer < self.n_layers:
            raise ConfigurationError(
                f"attention_layer {self.attention_layer} out of range for {self.n_layers} layers",
                key="attention_layer")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


class SelfAttention(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.n_heads = cfg.n_heads
        self.d_head = cfg.d_model // cfg.n_heads
        self.query = nn.Linear(cfg.d_model, cfg.d_model)
        self.key = nn.Linear(cfg.d_model, cfg.d_model)
        self.value = nn.Linear(cfg.d_model, cfg.d_model)
        self.output = nn.Linear(cfg.d_model, cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def _heads(self, x):
        n, t, _ = x.shape
        return x.view(n, t, self.n_heads, self.d_head).transpose(1, 2)

    def forward(self, x, key_mask):
        q, k, v = self._heads(self.query(x)), self._heads(self.key(x)), self._heads(self.value(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        context = self.dropout(probs) @ v
        n, _, t, _ = context.shape
        context = context.transpose(1, 2).reshape(n, t, -1)
        return self.output(context), probs


class EncoderLayer(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.attention = SelfAttention(cfg)
        self.attention_norm = nn.LayerNorm(cfg.d_model, eps=LAYER_NORM_EPS)
        self.intermediate = nn.Linear(cfg.d_model, cfg.d_ff)
        self.ff_output = nn.Linear(cfg.d_ff, cfg.d_model)
        self.output_norm = nn.LayerNorm(cfg.d_model, eps=LAYER_NORM_EPS)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, key_mask):
        attended, probs = self.attention(x, key_mask)
        x = self.attention_norm(x + self.dropout(attended))
        ff = self.ff_output(F.gelu(self.intermediate(x)))
        x = self.output_norm(x + self.dropout(ff))
        return x, probs


class SentenceEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.config = cfg.validate()
        self.token_embedding = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.position_embedding = nn.Embedding(cfg.T, cfg.d_model)
        self.embedding_norm = nn.LayerNorm(cfg.d_model, eps=LAYER_NORM_EPS)
        self.dropout = nn.Dropout(cfg.dropout)
        self.layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_layers))
        self.reset_parameters()

    def reset_parameters(self):
        for module in self.modules():
            if isinstance(module, (nn.Linear, nn.Embedding)):
                nn.init.normal_(module.weight, 0.0, INIT_STD)
                if getattr(module, "bias", None) is not None:
                    nn.init.zeros_(module.bias)
            elif isinstance(module, nn.LayerNorm):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)

    def forward(self, token_ids, attention_mask):
        """Encode ``(N, t)`` token ids, ``t <= T``.

        Returns the final token states ``(N, t, d_model)`` and a list with one
        ``(N, heads, t, t)`` attention tensor per layer.
        """
        n, t = token_ids.shape
        if t > self.config.T:
            raise InputError(f"sequence length {t} exceeds T={self.config.T}")
        if token_ids.numel() and (token_ids.min() < 0 or token_ids.max() >= self.config.vocab_size):
            raise InputError(f"token id out of range [0, {self.config.vocab_size})")
        key_mask = attention_mask.bool()
        positions = torch.arange(t, device=token_ids.device)
        x = self.token_embedding(token_ids) + self.position_embedding(positions)[None]
        x = self.dropout(self.embedding_norm(x))
        stacks = []
        for layer in self.layers:
            x, probs = layer(x, key_mask)
            stacks.append(probs)
        if not torch.isfinite(x).all():
            raise NumericalError("non-finite encoder activation")
        return x, stacks


def encoder_forward(encoder: SentenceEncoder, token_ids, attention_mask, train_mode: bool = False):
    """Run ``encoder`` in the requested mode, restoring its previous mode afterwards."""
    was_training = encoder.training
    encoder.train(train_mode)
    try:
        return encoder(torch.as_tensor(token_ids), torch.as_tensor(attention_mask))
    finally:
        encoder.train(was_training)


def cls_embedding(token_states):
    return token_states[..., 0, :]


def summed_word_attention(stacks, attention_mask, layer: int = -1, heads=None):
    """Attention each valid token receives from the valid queries.

    Uses one layer (default the last), averaged over ``heads`` (default all).
    Padded positions get 0, so the values average to 1 over valid tokens.
    """
    probs = stacks[layer]
    if heads is not None:
        probs = probs[:, list(heads)]
    avg = probs.mean(dim=1)
    mask = torch.as_tensor(attention_mask).to(avg.dtype)
    return (avg * mask[:, :, None]).sum(dim=1) * mask
