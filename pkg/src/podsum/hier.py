"""Hierarchical encoder-decoder used for attention-based sentence filtering.

Words are encoded per sentence and mean-pooled into sentence vectors, which a
sentence-level block contextualises. The decoder cross-attends over sentence
vectors only, so its cross-attention weights are a distribution over
sentences at every decoder step. Positions are sinusoidal, so transcripts of
any length are accepted.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import decoding
from .corpus import BOS, EOS, PAD
from .layers import DecoderLayer, EncoderLayer, init_weights, sinusoidal_positions
from .optim import OptimConfig, fit

Sentences = Sequence[Sequence[int]]


@dataclass
class HierConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_heads: int = 4
    feedforward_dim: int = 128
    dropout_rate: float = 0.0
    init_seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HierConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class HierModel(nn.Module):
    def __init__(self, config: HierConfig):
        super().__init__()
        if config.hidden_dim % config.num_heads:
            raise ValueError("hidden_dim must be divisible by num_heads")
        self.config = config
        H = config.hidden_dim
        args = (H, config.num_heads, config.feedforward_dim, config.dropout_rate)
        self.token_embedding = nn.Embedding(config.vocab_size, H)
        self.word_block = EncoderLayer(*args)
        self.word_norm = nn.LayerNorm(H)
        self.sentence_block = EncoderLayer(*args)
        self.sentence_norm = nn.LayerNorm(H)
        self.decoder_block = DecoderLayer(*args)
        self.decoder_norm = nn.LayerNorm(H)

    @property
    def dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    def _positions(self, n: int) -> torch.Tensor:
        # Scaled to the norm of a freshly initialised token embedding.
        H = self.config.hidden_dim
        return sinusoidal_positions(n, H, self.dtype) * (2.0 / H) ** 0.5

    def encode_batch(self, batch: Sequence[Sentences]) -> tuple[torch.Tensor, torch.Tensor]:
        """Sentence memory (B, I_max, H) and sentence pad mask (B, I_max)."""
        flat = []
        for sents in batch:
            if not sents:
                raise ValueError("empty sentence list")
            for s in sents:
                if not s:
                    raise ValueError("empty sentence")
                flat.append(list(s))
        L = max(len(s) for s in flat)
        ids = torch.full((len(flat), L), PAD, dtype=torch.long)
        word_pad = torch.ones(len(flat), L, dtype=torch.bool)
        for i, s in enumerate(flat):
            ids[i, : len(s)] = torch.tensor(s)
            word_pad[i, : len(s)] = False
        x = self.token_embedding(ids) + self._positions(L)[None]
        x = self.word_norm(self.word_block(x, word_pad))
        keep = (~word_pad).to(x.dtype)[..., None]
        pooled = (x * keep).sum(1) / keep.sum(1)

        I = max(len(s) for s in batch)
        sent_pad = torch.ones(len(batch), I, dtype=torch.bool)
        k, rows = 0, []
        for b, sents in enumerate(batch):
            rows.append(pooled[k:k + len(sents)])
            k += len(sents)
            sent_pad[b, : len(sents)] = False
        memory = torch.stack([torch.cat([r, r.new_zeros(I - len(r), r.shape[1])]) for r in rows])
        memory = memory + self._positions(I)[None]
        memory = self.sentence_norm(self.sentence_block(memory, sent_pad))
        return memory, sent_pad

    def decode(self, memory, sent_pad, tgt_in):
        """(logits (B, T, V), head-averaged cross attention (B, T, I))."""
        T = tgt_in.shape[1]
        y = self.token_embedding(tgt_in) + self._positions(T)[None]
        y, cross = self.decoder_block(y, memory, sent_pad)
        logits = self.decoder_norm(y) @ self.token_embedding.weight.T
        return logits, cross.mean(dim=1)

    def prepare(self, sources: Sequence[Sentences]):
        return self.encode_batch(sources)

    def next_log_probs(self, ctx, rows, prefixes):
        memory, pad = ctx
        logits, _ = self.decode(memory[rows], pad[rows], prefixes)
        return torch.log_softmax(logits[:, -1], dim=-1)


def init_hier(config: HierConfig) -> HierModel:
    model = HierModel(config).to(torch.float64)
    init_weights(model, torch.Generator().manual_seed(config.init_seed))
    return model


def hier_encode(model: HierModel, sentences: Sentences) -> torch.Tensor:
    memory, _ = model.encode_batch([sentences])
    return memory[0]


def _check_ids(model: HierModel, tokens: Sequence[int]) -> None:
    bad = [t for t in tokens if not 0 <= t < model.config.vocab_size]
    if bad:
        raise ValueError(f"token id(s) {bad[:5]} outside vocabulary of size {model.config.vocab_size}")


@torch.no_grad()
def teacher_forced_attention(model: HierModel, sentences: Sentences, target: Sequence[int]) -> np.ndarray:
    """(T, I) sentence attention while predicting each of the T target tokens.

    The decoder is fed [BOS] + target[:-1]; pass the description followed by
    EOS to cover every prediction step.
    """
    if len(target) < 1:
        raise ValueError("target must contain at least one token")
    _check_ids(model, target)
    memory, pad = model.encode_batch([sentences])
    tgt_in = torch.tensor([[BOS] + list(target[:-1])], dtype=torch.long)
    _, attn = model.decode(memory, pad, tgt_in)
    return attn[0].numpy().copy()


@torch.no_grad()
def decoded_attention(model: HierModel, sentences: Sentences, beam: int, max_len: int,
                      length_penalty: float = 1.0) -> np.ndarray:
    """Attention trace along the best beam hypothesis (forced re-pass)."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    hyp = decoding.beam_search(model, sentences, beam, max_len, length_penalty)
    return teacher_forced_attention(model, sentences, hyp.tokens[1:])


def nll_batch(model: HierModel, batch: Sequence[tuple[Sentences, Sequence[int]]]) -> tuple[torch.Tensor, int]:
    """Mean over examples of summed token NLL, and the number of target tokens."""
    memory, pad = model.encode_batch([s for s, _ in batch])
    seqs = [[BOS] + list(t) + [EOS] for _, t in batch]
    T = max(len(s) for s in seqs) - 1
    tgt_in = torch.full((len(batch), T), PAD, dtype=torch.long)
    gold = torch.full((len(batch), T), -100, dtype=torch.long)
    for i, s in enumerate(seqs):
        tgt_in[i, : len(s) - 1] = torch.tensor(s[:-1])
        gold[i, : len(s) - 1] = torch.tensor(s[1:])
    logits, _ = model.decode(memory, pad, tgt_in)
    nll = torch.nn.functional.cross_entropy(logits.transpose(1, 2), gold, ignore_index=-100, reduction="none")
    return nll.sum(1).mean(), int((gold != -100).sum())


def train_hier(model: HierModel, corpus: Sequence[tuple[Sentences, Sequence[int]]],
               config: OptimConfig) -> tuple[HierModel, list[float]]:
    """Minimise target NLL on full (untruncated) transcripts.

    Returns the model and the per-epoch mean per-token loss.
    """
    if not corpus:
        raise ValueError("empty corpus")
    model.train()
    token_losses: list[float] = []

    def batch_loss(idx):
        loss, n_tok = nll_batch(model, [corpus[i] for i in idx])
        token_losses.append(loss.item() * len(idx) / n_tok)
        return loss, {}

    per_epoch: list[float] = []
    steps_per_epoch = -(-len(corpus) // config.batch_size)

    def on_step(step, value, info):
        if step % steps_per_epoch == 0:
            chunk = token_losses[-steps_per_epoch:]
            per_epoch.append(sum(chunk) / len(chunk))

    fit(model.parameters(), len(corpus), batch_loss, config, on_step)
    model.eval()
    return model, per_epoch
