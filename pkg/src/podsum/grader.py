"""Learned summary grader.

An episode/summary pair becomes an M-channel grid of cosine similarities
between transcript sentences (rows) and summary sentences (columns), one
channel per embedding source. A small CNN regresses the 0-3 grade from it.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .corpus import BOS, EOS, UNK, split_token_sentences
from .layers import init_weights
from .metrics import pcc
from .optim import DivergenceError

Sentences = Sequence[Sequence[int]]


@dataclass
class GradedExample:
    episode_id: str
    episode_sentences: list[list[int]]
    summary_sentences: list[list[int]]
    grade: float

    def __post_init__(self):
        if not self.episode_sentences or not self.summary_sentences:
            raise ValueError(f"{self.episode_id}: both sides need at least one sentence")
        if not 0.0 <= self.grade <= 3.0:
            raise ValueError(f"{self.episode_id}: grade {self.grade} outside [0, 3]")


@dataclass
class GraderConfig:
    channels: int = 1
    learning_rate: float = 0.01
    epochs: int = 80
    batch_size: int = 8
    seed: int = 0
    grad_clip_norm: float = 5.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GraderConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def sentence_embed(tokens: Sequence[int], embedding: np.ndarray) -> np.ndarray:
    """L2-normalised mean of the token embedding rows."""
    if len(tokens) == 0:
        raise ValueError("cannot embed an empty sentence")
    v = np.asarray(embedding, dtype=np.float64)[list(tokens)].mean(axis=0)
    norm = np.linalg.norm(v)
    if norm == 0:
        v, norm = np.asarray(embedding[UNK], dtype=np.float64), np.linalg.norm(embedding[UNK])
    return v / norm


def build_similarity(episode: Sentences, summary: Sentences, sources: Sequence[np.ndarray]) -> np.ndarray:
    """(M, I, J) grid of cosine similarities, clipped to [-1, 1]."""
    if len(sources) < 1:
        raise ValueError("need at least one embedding source")
    out = np.empty((len(sources), len(episode), len(summary)))
    for m, emb in enumerate(sources):
        a = np.stack([sentence_embed(s, emb) for s in episode])
        b = np.stack([sentence_embed(s, emb) for s in summary])
        out[m] = np.clip(a @ b.T, -1.0, 1.0)
    return out


class GraderModel(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        self.conv1 = nn.Conv2d(channels, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.head = nn.Linear(16 * 4 * 4, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, M, I, J) -> (B,) raw grades."""
        if x.shape[1] != self.channels:
            raise ValueError(f"grader expects {self.channels} channel(s), got {x.shape[1]}")
        h = F.max_pool2d(torch.tanh(self.conv1(x)), 2, ceil_mode=True)
        h = F.max_pool2d(torch.tanh(self.conv2(h)), 2, ceil_mode=True)
        h = F.adaptive_avg_pool2d(h, 4)
        return self.head(h.flatten(1)).squeeze(-1)


def init_grader(channels: int, seed: int = 0) -> GraderModel:
    model = GraderModel(channels).to(torch.float64)
    init_weights(model, torch.Generator().manual_seed(seed))
    return model


def _as_input(matrix: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(matrix, dtype=np.float64))[None]


@torch.no_grad()
def grader_forward(grader: GraderModel, matrix: np.ndarray) -> float:
    """Raw (unclamped) predicted grade for one (M, I, J) matrix."""
    m = np.asarray(matrix)
    if m.ndim != 3 or m.shape[1] < 1 or m.shape[2] < 1:
        raise ValueError("similarity matrix must be (M, I, J) with I, J >= 1")
    return float(grader(_as_input(m))[0])


@torch.no_grad()
def grader_forward_batch(grader: GraderModel, matrices: Sequence[np.ndarray]) -> list[float]:
    """Predictions for many matrices; equal shapes are run together."""
    out = [0.0] * len(matrices)
    for shape, idx in _shape_groups(matrices, range(len(matrices))).items():
        preds = grader(torch.as_tensor(np.stack([matrices[i] for i in idx])))
        for i, p in zip(idx, preds.tolist()):
            out[i] = p
    return out


def _shape_groups(matrices, indices) -> dict[tuple, list[int]]:
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i in indices:
        groups[tuple(np.shape(matrices[i]))].append(i)
    return dict(sorted(groups.items()))


def mse_loss(grader: GraderModel, matrices: Sequence[np.ndarray], grades: Sequence[float], indices) -> torch.Tensor:
    """Mean squared error over `indices`, computed shape group by shape group."""
    total = 0.0
    indices = list(indices)
    for _, idx in _shape_groups(matrices, indices).items():
        x = torch.as_tensor(np.stack([matrices[i] for i in idx]))
        y = torch.tensor([float(grades[i]) for i in idx], dtype=torch.float64)
        total = total + ((grader(x) - y) ** 2).sum()
    return total / len(indices)


def train_grader(matrices: Sequence[np.ndarray], grades: Sequence[float], config: GraderConfig,
                 model: GraderModel | None = None) -> tuple[GraderModel, list[float]]:
    """Minibatch Adam on MSE. Returns the model and the per-epoch mean loss."""
    if len(matrices) < 2 or len(matrices) != len(grades):
        raise ValueError("need at least two matrices with matching grades")
    model = model or init_grader(config.channels, config.seed)
    params = list(model.parameters())
    opt = torch.optim.Adam(params, lr=config.learning_rate) if config.learning_rate > 0 else None
    rng = np.random.default_rng(config.seed)
    curve = []
    model.train()
    for _ in range(config.epochs):
        order = rng.permutation(len(matrices))
        losses = []
        for b in range(0, len(order), config.batch_size):
            for p in params:
                p.grad = None
            loss = mse_loss(model, matrices, grades, order[b:b + config.batch_size])
            if not torch.isfinite(loss):
                raise DivergenceError(f"grader loss became {loss.item()}")
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip_norm)
            if opt is not None:
                opt.step()
            losses.append(loss.item())
        curve.append(math.fsum(losses) / len(losses))
    model.eval()
    return model, curve


def episode_folds(episode_ids: Sequence[str], folds: int, seed: int) -> list[int]:
    """Fold index per example; all examples of one episode share a fold."""
    unique = sorted(set(episode_ids))
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(unique) < folds:
        raise ValueError(f"only {len(unique)} episodes for {folds} folds")
    order = np.random.default_rng(seed).permutation(len(unique))
    fold_of = {unique[j]: k % folds for k, j in enumerate(order)}
    return [fold_of[e] for e in episode_ids]


@dataclass
class CVResult:
    pooled_pcc: float
    fold_pcc: list[float | None]
    predictions: list[float]
    folds: list[int]

    def to_json(self) -> dict:
        return {"pooled_pcc": self.pooled_pcc, "mean_fold_pcc": self.mean_fold_pcc,
                "fold_pcc": self.fold_pcc, "n_examples": len(self.predictions)}

    @property
    def mean_fold_pcc(self) -> float | None:
        vals = [v for v in self.fold_pcc if v is not None]
        return sum(vals) / len(vals) if vals else None


def cross_validate(episode_ids: Sequence[str], matrices: Sequence[np.ndarray], grades: Sequence[float],
                   folds: int = 9, config: GraderConfig | None = None) -> CVResult:
    """Episode-grouped k-fold CV; reports pooled and per-fold PCC."""
    config = config or GraderConfig()
    assign = episode_folds(episode_ids, folds, config.seed)
    preds = [0.0] * len(matrices)
    fold_pcc: list[float | None] = []
    for k in range(folds):
        train_idx = [i for i, f in enumerate(assign) if f != k]
        test_idx = [i for i, f in enumerate(assign) if f == k]
        model, _ = train_grader([matrices[i] for i in train_idx], [grades[i] for i in train_idx], config)
        fold_preds = grader_forward_batch(model, [matrices[i] for i in test_idx])
        for i, p in zip(test_idx, fold_preds):
            preds[i] = p
        try:
            fold_pcc.append(pcc(fold_preds, [grades[i] for i in test_idx]))
        except ValueError:
            fold_pcc.append(None)
    return CVResult(pcc(preds, list(grades)), fold_pcc, preds, assign)


class GraderReward:
    """Callable reward: predicted grade of a decoded summary against its episode."""

    def __init__(self, grader: GraderModel, sources: Sequence[np.ndarray], terminal_ids: frozenset[int]):
        if len(sources) != grader.channels:
            raise ValueError(f"grader expects {grader.channels} embedding source(s), got {len(sources)}")
        self.grader = grader
        self.sources = list(sources)
        self.terminal_ids = terminal_ids

    def __call__(self, episode_sentences: Sentences, candidate: Sequence[int]) -> float:
        return reward_grader(self.grader, episode_sentences, candidate, self.sources, self.terminal_ids)


def reward_grader(grader: GraderModel, episode_sentences: Sentences, candidate: Sequence[int],
                  sources: Sequence[np.ndarray], terminal_ids: frozenset[int]) -> float:
    tokens = [t for t in candidate if t not in (BOS, EOS)]
    if not tokens:
        warnings.warn("empty candidate summary; grader reward is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    summary = split_token_sentences(tokens, terminal_ids)
    return grader_forward(grader, build_similarity(episode_sentences, summary, sources))


def save_grader(path, grader: GraderModel, config: GraderConfig, meta: dict | None = None) -> None:
    from .checkpoint import save_module

    save_module(path, "grader", grader, config.to_dict(), meta)


def load_grader(path) -> tuple[GraderModel, GraderConfig, dict]:
    from .checkpoint import CheckpointError, load_state, load_tensors

    kind, cfg, meta, tensors = load_tensors(path)
    if kind != "grader":
        raise CheckpointError(f"{path}: expected a grader checkpoint, found {kind}")
    config = GraderConfig.from_dict(cfg)
    model = GraderModel(config.channels).to(torch.float64)
    load_state(model, tensors)
    model.eval()
    return model, config, meta
