"""Pre-layer-norm transformer blocks shared by the summariser and the
hierarchical filter model."""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F


class MultiHeadAttention(nn.Module):
    def __init__(self, hidden: int, heads: int, dropout: float = 0.0):
        super().__init__()
        if hidden % heads:
            raise ValueError(f"hidden_dim {hidden} not divisible by num_heads {heads}")
        self.heads = heads
        self.head_dim = hidden // heads
        self.q_proj = nn.Linear(hidden, hidden)
        self.k_proj = nn.Linear(hidden, hidden)
        self.v_proj = nn.Linear(hidden, hidden)
        self.out_proj = nn.Linear(hidden, hidden)
        self.dropout = dropout

    def forward(self, query, memory, key_padding_mask=None, causal=False):
        """Returns (output, weights); weights are (B, heads, Tq, Tk).

        key_padding_mask is (B, Tk) with True at padded keys.
        """
        B, Tq, H = query.shape
        Tk = memory.shape[1]
        q = self.q_proj(query).view(B, Tq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(memory).view(B, Tk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(memory).view(B, Tk, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if key_padding_mask is not None:
            scores = scores.masked_fill(key_padding_mask[:, None, None, :], float("-inf"))
        if causal:
            future = torch.ones(Tq, Tk, dtype=torch.bool, device=query.device).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        attn = F.dropout(weights, self.dropout, self.training)
        out = (attn @ v).transpose(1, 2).reshape(B, Tq, H)
        return self.out_proj(out), weights


class FeedForward(nn.Module):
    def __init__(self, hidden: int, ffn: int, dropout: float = 0.0):
        super().__init__()
        self.fc1 = nn.Linear(hidden, ffn)
        self.fc2 = nn.Linear(ffn, hidden)
        self.dropout = dropout

    def forward(self, x):
        h = F.dropout(F.gelu(self.fc1(x)), self.dropout, self.training)
        return self.fc2(h)


class EncoderLayer(nn.Module):
    def __init__(self, hidden: int, heads: int, ffn: int, dropout: float = 0.0):
        super().__init__()
        self.self_attn_norm = nn.LayerNorm(hidden)
        self.self_attn = MultiHeadAttention(hidden, heads, dropout)
        self.ffn_norm = nn.LayerNorm(hidden)
        self.ffn = FeedForward(hidden, ffn, dropout)
        self.dropout = dropout

    def forward(self, x, pad_mask=None):
        h = self.self_attn_norm(x)
        h, _ = self.self_attn(h, h, pad_mask)
        x = x + F.dropout(h, self.dropout, self.training)
        h = self.ffn(self.ffn_norm(x))
        return x + F.dropout(h, self.dropout, self.training)


class DecoderLayer(nn.Module):
    def __init__(self, hidden: int, heads: int, ffn: int, dropout: float = 0.0):
        super().__init__()
        self.self_attn_norm = nn.LayerNorm(hidden)
        self.self_attn = MultiHeadAttention(hidden, heads, dropout)
        self.cross_attn_norm = nn.LayerNorm(hidden)
        self.cross_attn = MultiHeadAttention(hidden, heads, dropout)
        self.ffn_norm = nn.LayerNorm(hidden)
        self.ffn = FeedForward(hidden, ffn, dropout)
        self.dropout = dropout

    def forward(self, y, memory, memory_pad_mask=None):
        """Returns (output, cross-attention weights (B, heads, T, S))."""
        h = self.self_attn_norm(y)
        h, _ = self.self_attn(h, h, None, causal=True)
        y = y + F.dropout(h, self.dropout, self.training)
        h, cross = self.cross_attn(self.cross_attn_norm(y), memory, memory_pad_mask)
        y = y + F.dropout(h, self.dropout, self.training)
        h = self.ffn(self.ffn_norm(y))
        return y + F.dropout(h, self.dropout, self.training), cross


def encoder_layer_params(hidden: int, ffn: int) -> int:
    attn = 4 * (hidden * hidden + hidden)
    ff = hidden * ffn + ffn + ffn * hidden + hidden
    return attn + ff + 2 * (2 * hidden)


def decoder_layer_params(hidden: int, ffn: int) -> int:
    return encoder_layer_params(hidden, ffn) + 4 * (hidden * hidden + hidden) + 2 * hidden


def init_weights(module: nn.Module, generator: torch.Generator) -> None:
    """Scaled normal: Linear ~ N(0, 1/fan_in), embeddings ~ N(0, 1/hidden)."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if isinstance(_owner(module, name), nn.LayerNorm):
                p.fill_(1.0 if name.endswith("weight") else 0.0)
            elif name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p.shape[-1]
                p.copy_(torch.randn(p.shape, generator=generator, dtype=p.dtype) / math.sqrt(fan_in))


def _owner(root: nn.Module, param_name: str) -> nn.Module:
    mod = root
    for part in param_name.split(".")[:-1]:
        mod = getattr(mod, part)
    return mod


def sinusoidal_positions(n: int, hidden: int, dtype=torch.float64) -> torch.Tensor:
    pos = torch.arange(n, dtype=dtype)[:, None]
    i = torch.arange(0, hidden, 2, dtype=dtype)
    angle = pos / torch.pow(torch.tensor(10000.0, dtype=dtype), i / hidden)
    pe = torch.zeros(n, hidden, dtype=dtype)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle)[:, : hidden // 2]
    return pe
