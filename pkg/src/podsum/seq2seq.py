"""Toy transformer encoder-decoder summariser.

One token embedding table is shared by encoder input, decoder input and the
output head. Positions use learned absolute embeddings that can be expanded
by copying the trained rows.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Sequence

import torch
from torch import nn
from torch.nn import functional as F

from . import decoding
from .corpus import BOS, PAD
from .decoding import Hypothesis
from .layers import DecoderLayer, EncoderLayer, decoder_layer_params, encoder_layer_params, init_weights

DTYPES = {"float64": torch.float64, "float32": torch.float32}


class CapacityError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    feedforward_dim: int = 128
    max_positions: int = 128
    dropout_rate: float = 0.0
    init_seed: int = 0
    dtype: str = "float64"

    def validate(self) -> None:
        if self.vocab_size < 5:
            raise ValueError("vocab_size must be >= 5")
        if self.hidden_dim < 1 or self.num_heads < 1 or self.hidden_dim % self.num_heads:
            raise ValueError(f"hidden_dim {self.hidden_dim} must be a positive multiple of num_heads {self.num_heads}")
        if self.max_positions < 1:
            raise ValueError("max_positions must be >= 1")
        if self.encoder_layers < 1 or self.decoder_layers < 1 or self.feedforward_dim < 1:
            raise ValueError("layer counts and feedforward_dim must be positive")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in fields})


class Seq2SeqModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        H = config.hidden_dim
        self.token_embedding = nn.Embedding(config.vocab_size, H)
        self.encoder_positional = nn.Embedding(config.max_positions, H)
        self.decoder_positional = nn.Embedding(config.max_positions, H)
        args = (H, config.num_heads, config.feedforward_dim, config.dropout_rate)
        self.encoder = nn.ModuleList(EncoderLayer(*args) for _ in range(config.encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(*args) for _ in range(config.decoder_layers))
        self.encoder_norm = nn.LayerNorm(H)
        self.decoder_norm = nn.LayerNorm(H)
        self.frozen: set[str] = set()

    @property
    def max_positions(self) -> int:
        return self.encoder_positional.num_embeddings

    @property
    def dtype(self) -> torch.dtype:
        return self.token_embedding.weight.dtype

    # -- forward ----------------------------------------------------------

    def encode(self, src: torch.Tensor, src_pad: torch.Tensor) -> torch.Tensor:
        if src.shape[1] > self.max_positions:
            raise CapacityError(f"input exceeds positional capacity ({src.shape[1]} > {self.max_positions})")
        pos = torch.arange(src.shape[1])
        x = self.token_embedding(src) + self.encoder_positional(pos)[None]
        x = F.dropout(x, self.config.dropout_rate, self.training)
        for layer in self.encoder:
            x = layer(x, src_pad)
        return self.encoder_norm(x)

    def decode(self, memory: torch.Tensor, src_pad: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        """Logits (B, T, V) for every decoder input position."""
        if tgt_in.shape[1] > self.max_positions:
            raise CapacityError(f"target exceeds positional capacity ({tgt_in.shape[1]} > {self.max_positions})")
        pos = torch.arange(tgt_in.shape[1])
        y = self.token_embedding(tgt_in) + self.decoder_positional(pos)[None]
        y = F.dropout(y, self.config.dropout_rate, self.training)
        for layer in self.decoder:
            y, _ = layer(y, memory, src_pad)
        return self.decoder_norm(y) @ self.token_embedding.weight.T

    def forward(self, src: torch.Tensor, src_pad: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        """Log-probabilities (B, T, V)."""
        return torch.log_softmax(self.decode(self.encode(src, src_pad), src_pad, tgt_in), dim=-1)

    # -- scorer protocol --------------------------------------------------

    def prepare(self, sources: Sequence[Sequence[int]]):
        src, pad = pad_batch(sources)
        return self.encode(src, pad), pad

    def next_log_probs(self, ctx, rows: torch.Tensor, prefixes: torch.Tensor) -> torch.Tensor:
        memory, pad = ctx
        logits = self.decode(memory[rows], pad[rows], prefixes)[:, -1]
        return torch.log_softmax(logits, dim=-1)

    # -- parameter groups -------------------------------------------------

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        groups = {
            "token_embedding": [self.token_embedding.weight],
            "encoder_positional": [self.encoder_positional.weight],
            "decoder_positional": [self.decoder_positional.weight],
            "encoder_norm": list(self.encoder_norm.parameters()),
            "decoder_norm": list(self.decoder_norm.parameters()),
        }
        for i, layer in enumerate(self.encoder):
            groups[f"encoder.{i}"] = list(layer.parameters())
        for i, layer in enumerate(self.decoder):
            groups[f"decoder.{i}"] = list(layer.parameters())
        return groups

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def trainable_count(self) -> int:
        return sum(p.numel() for p in self.trainable_parameters())


# The output head is the token embedding itself.
GROUP_ALIASES = {"output_head": "token_embedding"}


def pad_batch(seqs: Sequence[Sequence[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """(B, L) ids padded with PAD, and the (B, L) boolean pad mask."""
    width = max(1, max(len(s) for s in seqs))
    ids = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, s in enumerate(seqs):
        if len(s):
            ids[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
    mask = torch.ones_like(ids, dtype=torch.bool)
    for i, s in enumerate(seqs):
        mask[i, : max(1, len(s))] = False
    return ids, mask


def init_model(config: ModelConfig) -> Seq2SeqModel:
    model = Seq2SeqModel(config).to(DTYPES[config.dtype])
    gen = torch.Generator().manual_seed(config.init_seed)
    init_weights(model, gen)
    return model


def param_count(config: ModelConfig) -> int:
    """Closed-form parameter count (the output head adds nothing: it is tied)."""
    V, H, P, F_ = config.vocab_size, config.hidden_dim, config.max_positions, config.feedforward_dim
    return (V * H + 2 * P * H
            + config.encoder_layers * encoder_layer_params(H, F_)
            + config.decoder_layers * decoder_layer_params(H, F_)
            + 2 * 2 * H)


def expand_positional(model: Seq2SeqModel, new_max: int, seed: int) -> Seq2SeqModel:
    """Grow both positional tables to new_max rows; rows below the old capacity
    are copied exactly, new rows are seeded N(0, 1/hidden)."""
    old_max = model.max_positions
    if new_max <= old_max:
        raise ValueError(f"new_max {new_max} must exceed current max_positions {old_max}")
    H = model.config.hidden_dim
    gen = torch.Generator().manual_seed(seed)
    for name in ("encoder_positional", "decoder_positional"):
        old = getattr(model, name)
        table = nn.Embedding(new_max, H).to(model.dtype)
        with torch.no_grad():
            table.weight[:old_max] = old.weight
            fresh = torch.randn(new_max - old_max, H, generator=gen, dtype=torch.float64) / H ** 0.5
            table.weight[old_max:] = fresh.to(model.dtype)
        table.weight.requires_grad_(old.weight.requires_grad)
        setattr(model, name, table)
    model.config = dataclasses.replace(model.config, max_positions=new_max)
    return model


def freeze_preset(name: str, config: ModelConfig) -> list[str]:
    """Group names to freeze for a named recipe.

    ``last_layers``: train only the last encoder layer, last decoder layer, the
    (tied) output head and the final norms. ``first:K``: freeze the first K
    layers of encoder and decoder. ``none`` / ``all`` are the boundaries.
    """
    everything = (["token_embedding", "encoder_positional", "decoder_positional", "encoder_norm", "decoder_norm"]
                  + [f"encoder.{i}" for i in range(config.encoder_layers)]
                  + [f"decoder.{i}" for i in range(config.decoder_layers)])
    if name == "none":
        return []
    if name == "all":
        return everything
    if name == "last_layers":
        keep = {"token_embedding", "encoder_norm", "decoder_norm",
                f"encoder.{config.encoder_layers - 1}", f"decoder.{config.decoder_layers - 1}"}
        return [g for g in everything if g not in keep]
    if name.startswith("first:"):
        k = int(name.split(":", 1)[1])
        return [f"encoder.{i}" for i in range(min(k, config.encoder_layers))] + \
               [f"decoder.{i}" for i in range(min(k, config.decoder_layers))]
    raise ValueError(f"unknown freeze preset {name!r}")


def freeze(model: Seq2SeqModel, groups: Iterable[str]) -> Seq2SeqModel:
    """Freeze exactly the named groups; every other parameter becomes trainable."""
    available = model.parameter_groups()
    names = {GROUP_ALIASES.get(g, g) for g in groups}
    unknown = sorted(n for n in names if n not in available)
    if unknown:
        raise ValueError(f"unknown parameter group(s): {', '.join(unknown)}")
    for p in model.parameters():
        p.requires_grad_(True)
    for n in names:
        for p in available[n]:
            p.requires_grad_(False)
    model.frozen = names
    return model


def trainable_count_closed_form(config: ModelConfig, frozen: Iterable[str]) -> int:
    H, F_ = config.hidden_dim, config.feedforward_dim
    sizes = {
        "token_embedding": config.vocab_size * H,
        "encoder_positional": config.max_positions * H,
        "decoder_positional": config.max_positions * H,
        "encoder_norm": 2 * H,
        "decoder_norm": 2 * H,
    }
    sizes.update({f"encoder.{i}": encoder_layer_params(H, F_) for i in range(config.encoder_layers)})
    sizes.update({f"decoder.{i}": decoder_layer_params(H, F_) for i in range(config.decoder_layers)})
    frozen = {GROUP_ALIASES.get(g, g) for g in frozen}
    return sum(v for k, v in sizes.items() if k not in frozen)


def forward_log_probs(model: Seq2SeqModel, source_tokens: Sequence[int], target_prefix: Sequence[int]) -> torch.Tensor:
    """Next-token log-probabilities (V,) after target_prefix (which starts with BOS)."""
    if not target_prefix or target_prefix[0] != BOS:
        raise ValueError("target_prefix must begin with BOS")
    if len(source_tokens) > model.max_positions:
        raise CapacityError(f"input exceeds positional capacity ({len(source_tokens)} > {model.max_positions})")
    ctx = model.prepare([source_tokens])
    return model.next_log_probs(ctx, torch.zeros(1, dtype=torch.long),
                                torch.tensor([list(target_prefix)], dtype=torch.long))[0]


def greedy_decode(model, source: Sequence[int], max_len: int) -> Hypothesis:
    return decoding.greedy_batch(model, [source], max_len)[0]


def sample_decode(model, source: Sequence[int], max_len: int, seed: int, temperature: float = 1.0) -> Hypothesis:
    return decoding.sample_batch(model, [source], max_len, [seed], temperature)[0]


def beam_decode(model, source: Sequence[int], beam: int, max_len: int, length_penalty: float = 1.0) -> Hypothesis:
    return decoding.beam_search(model, source, beam, max_len, length_penalty)
