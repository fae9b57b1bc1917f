"""Optimizer construction and the shared minibatch training loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch


class DivergenceError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    learning_rate: float = 0.1
    batch_size: int = 8
    epochs: int = 10
    grad_clip_norm: float = 1.0
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0


def make_optimizer(params: Sequence[torch.nn.Parameter], cfg: OptimConfig) -> torch.optim.Optimizer | None:
    params = [p for p in params if p.requires_grad]
    if not params:
        return None
    if cfg.optimizer == "sgd":
        return torch.optim.SGD(params, lr=cfg.learning_rate, momentum=cfg.momentum)
    if cfg.optimizer == "adam":
        return torch.optim.Adam(params, lr=cfg.learning_rate)
    raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


def clip_and_step(optimizer, params: Sequence[torch.nn.Parameter], max_norm: float) -> float:
    """Clip by global norm, step, and return the pre-clip norm."""
    params = [p for p in params if p.requires_grad and p.grad is not None]
    if not params:
        return 0.0
    norm = float(torch.nn.utils.clip_grad_norm_(params, max_norm))
    if not math.isfinite(norm):
        raise DivergenceError(f"non-finite gradient norm {norm}")
    if optimizer is not None:
        optimizer.step()
    return norm


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    order = rng.permutation(n)
    return [order[i:i + batch_size].tolist() for i in range(0, n, batch_size)]


def fit(params: Sequence[torch.nn.Parameter], n_examples: int, batch_loss: Callable[[list[int]], tuple[torch.Tensor, dict]],
        cfg: OptimConfig, on_step: Callable[[int, float, dict], None] | None = None) -> list[float]:
    """Seeded-shuffle minibatch loop. Returns the mean batch loss per epoch.

    batch_loss(indices) returns the (differentiable) batch loss and a dict of
    diagnostics passed to on_step.
    """
    params = list(params)
    optimizer = make_optimizer(params, cfg)
    rng = np.random.default_rng(cfg.seed)
    torch.manual_seed(cfg.seed)
    curve, step = [], 0
    for _ in range(cfg.epochs):
        losses = []
        for idx in epoch_batches(n_examples, cfg.batch_size, rng):
            for p in params:
                p.grad = None
            loss, info = batch_loss(idx)
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"loss became {value} at step {step}")
            if loss.requires_grad:
                loss.backward()
            clip_and_step(optimizer, params, cfg.grad_clip_norm)
            step += 1
            losses.append(value)
            if on_step is not None:
                on_step(step, value, info)
        curve.append(math.fsum(losses) / len(losses))
    return curve
