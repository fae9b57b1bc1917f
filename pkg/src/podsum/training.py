"""Maximum-likelihood, self-critical and mixed training objectives.

The self-critical loss for one example is

    (Reward(greedy) - Reward(sample)) * sum_t log P(sample_t | sample_<t, x)

with the reward gap held constant, so gradients flow only through the
sampled sequence's log-probability. The mixed objective is
gamma * L_rl + (1 - gamma) * L_ml.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from . import decoding
from .checkpoint import save_model
from .corpus import BOS, EOS, PAD
from .decoding import Hypothesis
from .metrics import rouge_l
from .optim import DivergenceError, OptimConfig, clip_and_step, epoch_batches, make_optimizer
from .seq2seq import Seq2SeqModel, pad_batch

log = logging.getLogger(__name__)

OBJECTIVES = ("ml", "rl", "mixed")


@dataclass
class Example:
    """One training pair. `target` excludes BOS/EOS; `sentences` is the
    (filtered) source split into sentences, needed by the grader reward."""

    id: str
    source: list[int]
    target: list[int]
    sentences: list[list[int]] | None = None


@dataclass
class TrainingConfig:
    objective: str = "ml"
    gamma: float = 1.0
    reward: str = "rouge-l"
    learning_rate: float = 0.1
    batch_size: int = 8
    epochs: int = 10
    grad_clip_norm: float = 1.0
    seed: int = 0
    checkpoint_every: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.0
    max_len: int = 32
    temperature: float = 1.0

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive")

    @property
    def effective_gamma(self) -> float:
        return {"ml": 0.0, "rl": 1.0}.get(self.objective, self.gamma)

    def optim(self) -> OptimConfig:
        return OptimConfig(self.learning_rate, self.batch_size, self.epochs, self.grad_clip_norm,
                           self.seed, self.optimizer, self.momentum)


class RewardFn:
    """Sequence reward. `kind` is "rouge-l" or "grader"; a grader reward wraps
    a callable (source_sentences, candidate_tokens) -> float."""

    def __init__(self, kind: str = "rouge-l", grader: Callable | None = None):
        if kind not in ("rouge-l", "grader"):
            raise ValueError(f"unknown reward {kind!r}")
        if kind == "grader" and grader is None:
            raise ValueError("grader reward needs a grader callable")
        self.kind = kind
        self.grader = grader

    def __call__(self, candidate: Sequence[int], example: Example) -> float:
        if self.kind == "rouge-l":
            return reward_rouge_l(candidate, example.target)
        value = float(self.grader(example.sentences or [example.source], candidate))
        if not math.isfinite(value):
            raise ValueError(f"episode {example.id}: grader reward is {value}")
        return value


def reward_rouge_l(candidate: Sequence[int], reference: Sequence[int]) -> float:
    """ROUGE-L F1 (whole sequence) of a BOS/EOS-free candidate."""
    if not reference:
        raise ValueError("reference must be nonempty")
    cand = [t for t in candidate if t not in (BOS, EOS)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return rouge_l(cand, list(reference)).f1


# -- differentiable pieces ---------------------------------------------------

def _teacher_forced(model: Seq2SeqModel, sources: Sequence[Sequence[int]], seqs: Sequence[Sequence[int]]) -> torch.Tensor:
    """Per-example sum of log P(seq[t] | seq[:t], x) for t >= 1 (seq starts with BOS)."""
    src, src_pad = pad_batch(sources)
    T = max(len(s) for s in seqs) - 1
    tgt_in = torch.full((len(seqs), T), PAD, dtype=torch.long)
    gold = torch.full((len(seqs), T), -100, dtype=torch.long)
    for i, s in enumerate(seqs):
        tgt_in[i, : len(s) - 1] = torch.tensor(s[:-1])
        gold[i, : len(s) - 1] = torch.tensor(s[1:])
    logits = model.decode(model.encode(src, src_pad), src_pad, tgt_in)
    nll = F.cross_entropy(logits.transpose(1, 2), gold, ignore_index=-100, reduction="none")
    return -nll.sum(1)


def ml_loss_tensor(model: Seq2SeqModel, sources, targets) -> torch.Tensor:
    """Per-example negative log-likelihood; targets include BOS ... EOS."""
    return -_teacher_forced(model, sources, targets)


def rl_loss_tensor(model: Seq2SeqModel, sources, samples: Sequence[Hypothesis], gaps: Sequence[float]) -> torch.Tensor:
    """Per-example self-critical loss for fixed samples and reward gaps."""
    logp = _teacher_forced(model, sources, [h.tokens for h in samples])
    return torch.tensor(list(gaps), dtype=logp.dtype) * logp


def _grads(model: Seq2SeqModel) -> dict[str, torch.Tensor]:
    return {n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
            for n, p in model.named_parameters() if p.requires_grad}


def _zero_grad(model) -> None:
    for p in model.parameters():
        p.grad = None


def _check_target(target: Sequence[int]) -> None:
    if len(target) < 2 or target[0] != BOS or target[-1] != EOS:
        raise ValueError("target must begin with BOS and end with EOS")


@dataclass
class LossResult:
    loss: float
    gradients: dict[str, torch.Tensor]
    per_token: float | None = None
    sample_reward: float | None = None
    greedy_reward: float | None = None
    sample: Hypothesis | None = None
    greedy: Hypothesis | None = None
    loss_ml: float | None = None
    loss_rl: float | None = None


def loss_ml(model: Seq2SeqModel, source: Sequence[int], target: Sequence[int]) -> LossResult:
    _check_target(target)
    _zero_grad(model)
    loss = ml_loss_tensor(model, [source], [target])[0]
    if not torch.isfinite(loss):
        raise DivergenceError(f"ML loss is {loss.item()}")
    if loss.requires_grad:
        loss.backward()
    value = loss.item()
    return LossResult(value, _grads(model), per_token=value / (len(target) - 1), loss_ml=value)


def _self_critical_sequences(model, examples: Sequence[Example], reward_fn: RewardFn, seeds: Sequence[int],
                             max_len: int, temperature: float = 1.0):
    was_training = model.training
    model.eval()
    sources = [e.source for e in examples]
    samples = decoding.sample_batch(model, sources, max_len, seeds, temperature)
    greedy = decoding.greedy_batch(model, sources, max_len)
    model.train(was_training)
    rs = [reward_fn(h.generated, e) for h, e in zip(samples, examples)]
    rg = [reward_fn(h.generated, e) for h, e in zip(greedy, examples)]
    return samples, greedy, rs, rg


def loss_rl(model: Seq2SeqModel, source: Sequence[int], target: Sequence[int], reward_fn: RewardFn, seed: int,
            max_len: int | None = None, sentences=None) -> LossResult:
    """Self-critical loss; the caller is expected to warm-start from an ML model."""
    _check_target(target)
    ex = Example("", list(source), list(target[1:-1]), sentences)
    max_len = max_len or model.max_positions - 1
    samples, greedy, rs, rg = _self_critical_sequences(model, [ex], reward_fn, [seed], max_len)
    _zero_grad(model)
    loss = rl_loss_tensor(model, [source], samples, [rg[0] - rs[0]])[0]
    if loss.requires_grad:
        loss.backward()
    return LossResult(loss.item(), _grads(model), sample_reward=rs[0], greedy_reward=rg[0],
                      sample=samples[0], greedy=greedy[0], loss_rl=loss.item())


def loss_mixed(model: Seq2SeqModel, source: Sequence[int], target: Sequence[int], gamma: float,
               reward_fn: RewardFn, seed: int, max_len: int | None = None, sentences=None) -> LossResult:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    rl = loss_rl(model, source, target, reward_fn, seed, max_len, sentences)
    ml = loss_ml(model, source, target)
    grads = {n: gamma * rl.gradients[n] + (1 - gamma) * ml.gradients[n] for n in ml.gradients}
    return LossResult(gamma * rl.loss + (1 - gamma) * ml.loss, grads, per_token=ml.per_token,
                      sample_reward=rl.sample_reward, greedy_reward=rl.greedy_reward,
                      sample=rl.sample, greedy=rl.greedy, loss_ml=ml.loss, loss_rl=rl.loss)


# -- training loop -------------------------------------------------------------

def step_seed(seed: int, step: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, step, index]).generate_state(1)[0])


def checkpoint_name(seed: int, step: int) -> str:
    return f"ckpt_seed{seed}_step{step}.ckpt"


@dataclass
class TrainResult:
    model: Seq2SeqModel
    log: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)

    @property
    def zero_gap_fraction(self) -> float | None:
        rows = [r["zero_gap_fraction"] for r in self.log if r.get("zero_gap_fraction") is not None]
        return sum(rows) / len(rows) if rows else None


def train(model: Seq2SeqModel, corpus: Sequence[Example], config: TrainingConfig,
          reward_fn: RewardFn | None = None, checkpoint_dir: str | Path | None = None,
          log_path: str | Path | None = None) -> TrainResult:
    """Minibatch training; batch loss is the mean of per-example losses."""
    config.validate()
    if not corpus:
        raise ValueError("empty training corpus")
    gamma = config.effective_gamma
    if gamma > 0 and reward_fn is None:
        reward_fn = RewardFn(config.reward) if config.reward == "rouge-l" else None
        if reward_fn is None:
            raise ValueError("grader reward requires a RewardFn")
    params = model.trainable_parameters()
    optimizer = make_optimizer(params, config.optim())
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    result = TrainResult(model)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    step = 0
    model.train()
    try:
        for _epoch in range(config.epochs):
            for idx in epoch_batches(len(corpus), config.batch_size, rng):
                batch = [corpus[i] for i in idx]
                _zero_grad(model)
                row = {"step": step + 1, "loss_ml": None, "loss_rl": None, "sample_reward": None,
                       "greedy_reward": None, "zero_gap_fraction": None}
                sources = [e.source for e in batch]
                total = None
                if gamma < 1.0:
                    ml = ml_loss_tensor(model, sources, [[BOS] + e.target + [EOS] for e in batch]).mean()
                    row["loss_ml"] = ml.item()
                    total = (1 - gamma) * ml
                if gamma > 0.0:
                    seeds = [step_seed(config.seed, step, i) for i in idx]
                    samples, _, rs, rg = _self_critical_sequences(
                        model, batch, reward_fn, seeds, config.max_len, config.temperature)
                    gaps = [g - s for g, s in zip(rg, rs)]
                    rl = rl_loss_tensor(model, sources, samples, gaps).mean()
                    row.update(loss_rl=rl.item(), sample_reward=sum(rs) / len(rs),
                               greedy_reward=sum(rg) / len(rg),
                               zero_gap_fraction=sum(g == 0 for g in gaps) / len(gaps))
                    total = gamma * rl if total is None else total + gamma * rl
                value = total.item()
                if not math.isfinite(value):
                    raise DivergenceError(f"loss became {value} at step {step + 1}")
                if total.requires_grad:
                    total.backward()
                clip_and_step(optimizer, params, config.grad_clip_norm)
                step += 1
                result.log.append(row)
                if log_fh is not None:
                    log_fh.write(json.dumps(row, sort_keys=True) + "\n")
                if ckpt_dir is not None and config.checkpoint_every and step % config.checkpoint_every == 0:
                    result.checkpoints.append(_write_ckpt(model, ckpt_dir, config, step))
        if ckpt_dir is not None and (not result.checkpoints or not result.checkpoints[-1].name.endswith(f"_step{step}.ckpt")):
            result.checkpoints.append(_write_ckpt(model, ckpt_dir, config, step))
    finally:
        if log_fh is not None:
            log_fh.close()
        model.eval()
    return result


def _write_ckpt(model, ckpt_dir: Path, config: TrainingConfig, step: int) -> Path:
    path = ckpt_dir / checkpoint_name(config.seed, step)
    save_model(path, model, meta={"seed": config.seed, "step": step, "objective": config.objective})
    return path


def per_token_loss(model: Seq2SeqModel, corpus: Sequence[Example]) -> float:
    with torch.no_grad():
        targets = [[BOS] + e.target + [EOS] for e in corpus]
        nll = ml_loss_tensor(model, [e.source for e in corpus], targets)
    return float(nll.sum()) / sum(len(t) - 1 for t in targets)


# -- finite-difference gradient check ----------------------------------------

@dataclass
class GradCheckReport:
    coords: list[tuple[str, int, float, float, float]]

    @property
    def max_rel_error(self) -> float:
        return max((c[4] for c in self.coords), default=0.0)

    @property
    def mean_rel_error(self) -> float:
        return sum(c[4] for c in self.coords) / len(self.coords) if self.coords else 0.0


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_difference_check(module: torch.nn.Module, closure: Callable[[], torch.Tensor], n_coords: int,
                            epsilon: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare autograd gradients of closure() with central differences at
    seeded random trainable coordinates."""
    named = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
    if not named:
        return GradCheckReport([])
    for p in module.parameters():
        p.grad = None
    loss = closure()
    loss.backward()
    sizes = np.array([p.numel() for _, p in named])
    rng = np.random.default_rng(seed)
    flat = rng.choice(int(sizes.sum()), size=min(n_coords, int(sizes.sum())), replace=False)
    bounds = np.cumsum(sizes)
    coords = []
    with torch.no_grad():
        for f in sorted(flat.tolist()):
            k = int(np.searchsorted(bounds, f, side="right"))
            name, p = named[k]
            i = f - (int(bounds[k - 1]) if k else 0)
            analytic = float(p.grad.view(-1)[i]) if p.grad is not None else 0.0
            view = p.data.view(-1)
            orig = float(view[i])
            view[i] = orig + epsilon
            up = closure().item()
            view[i] = orig - epsilon
            down = closure().item()
            view[i] = orig
            numeric = (up - down) / (2 * epsilon)
            coords.append((name, i, analytic, numeric, relative_error(analytic, numeric)))
    for p in module.parameters():
        p.grad = None
    return GradCheckReport(coords)


def grad_check(model: Seq2SeqModel, source: Sequence[int], target: Sequence[int], objective: str = "ml",
               epsilon: float = 1e-5, n_coords: int = 30, seed: int = 0, gamma: float = 0.5,
               reward_fn: RewardFn | None = None, max_len: int | None = None) -> GradCheckReport:
    """Central-difference check of loss_ml / loss_rl / loss_mixed gradients.

    For RL objectives the sampled and greedy sequences (hence rewards) are
    drawn once and held fixed across perturbations.
    """
    if model.dtype != torch.float64:
        raise ValueError("gradient checks require a float64 model")
    _check_target(target)
    reward_fn = reward_fn or RewardFn("rouge-l")
    g = {"ml": 0.0, "rl": 1.0, "mixed": gamma}[objective]
    if g > 0:
        ex = Example("", list(source), list(target[1:-1]))
        samples, _, rs, rg = _self_critical_sequences(model, [ex], reward_fn, [seed], max_len or model.max_positions - 1)
        gap = rg[0] - rs[0]

    def closure():
        total = 0.0
        if g < 1.0:
            total = total + (1 - g) * ml_loss_tensor(model, [source], [target])[0]
        if g > 0.0:
            total = total + g * rl_loss_tensor(model, [source], samples, [gap])[0]
        return total

    was_training = model.training
    model.eval()
    try:
        return finite_difference_check(model, closure, n_coords, epsilon, seed)
    finally:
        model.train(was_training)
