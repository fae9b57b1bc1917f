"""Greedy, ancestral-sampling and beam-search decoding over any scorer.

A scorer exposes ``prepare(sources) -> ctx`` and
``next_log_probs(ctx, rows, prefixes) -> (K, V)`` where ``rows[k]`` picks the
prepared source that prefix ``k`` continues. Single models, ensembles and the
hierarchical model all implement it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
import torch

from .corpus import BOS, EOS


class Scorer(Protocol):
    def prepare(self, sources: Sequence) -> object: ...

    def next_log_probs(self, ctx: object, rows: torch.Tensor, prefixes: torch.Tensor) -> torch.Tensor: ...


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    per_step_log_probs: list[float] = field(default_factory=list)

    @property
    def generated(self) -> list[int]:
        """Tokens after BOS, without a trailing EOS."""
        toks = self.tokens[1:]
        return toks[:-1] if toks and toks[-1] == EOS else toks

    @property
    def length(self) -> int:
        return len(self.tokens) - 1

    def score(self, length_penalty: float) -> float:
        if self.length == 0:
            return self.log_prob
        return self.log_prob / self.length ** length_penalty


def _prefix_tensor(prefixes: Sequence[Sequence[int]]) -> torch.Tensor:
    return torch.tensor(prefixes, dtype=torch.long)


@torch.no_grad()
def greedy_batch(scorer: Scorer, sources: Sequence, max_len: int) -> list[Hypothesis]:
    """Argmax at every step (ties to the lowest token id) until EOS or max_len."""
    ctx = scorer.prepare(sources)
    hyps = [Hypothesis([BOS], 0.0) for _ in sources]
    active = list(range(len(sources)))
    for _ in range(max_len):
        if not active:
            break
        lp = scorer.next_log_probs(ctx, torch.tensor(active), _prefix_tensor([hyps[i].tokens for i in active]))
        best = torch.argmax(lp, dim=-1)
        still = []
        for k, i in enumerate(active):
            tok = int(best[k])
            step_lp = float(lp[k, tok])
            hyps[i].tokens.append(tok)
            hyps[i].per_step_log_probs.append(step_lp)
            if tok != EOS:
                still.append(i)
        active = still
    for h in hyps:
        h.log_prob = math.fsum(h.per_step_log_probs)
    return hyps


def _sample_index(probs: np.ndarray, u: float) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


@torch.no_grad()
def sample_batch(scorer: Scorer, sources: Sequence, max_len: int, seeds: Sequence[int],
                 temperature: float = 1.0) -> list[Hypothesis]:
    """Ancestral sampling, one numpy generator per source.

    per_step_log_probs are taken from the untempered distribution.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    rngs = [np.random.default_rng(s) for s in seeds]
    ctx = scorer.prepare(sources)
    hyps = [Hypothesis([BOS], 0.0) for _ in sources]
    active = list(range(len(sources)))
    for _ in range(max_len):
        if not active:
            break
        lp = scorer.next_log_probs(ctx, torch.tensor(active), _prefix_tensor([hyps[i].tokens for i in active]))
        lp_np = lp.double().cpu().numpy()
        still = []
        for k, i in enumerate(active):
            z = lp_np[k] / temperature
            probs = np.exp(z - z.max())
            tok = _sample_index(probs, rngs[i].random())
            hyps[i].tokens.append(tok)
            hyps[i].per_step_log_probs.append(float(lp_np[k, tok]))
            if tok != EOS:
                still.append(i)
        active = still
    for h in hyps:
        h.log_prob = math.fsum(h.per_step_log_probs)
    return hyps


def _beam_pass(scorer: Scorer, ctx, beam: int, max_len: int) -> list[Hypothesis]:
    live = [Hypothesis([BOS], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        width = beam - len(finished)
        if width <= 0 or not live:
            break
        lp = scorer.next_log_probs(ctx, torch.zeros(len(live), dtype=torch.long),
                                   _prefix_tensor([h.tokens for h in live]))
        lp_np = lp.double().cpu().numpy()
        base = np.array([h.log_prob for h in live])[:, None]
        total = (base + lp_np).ravel()
        V = lp_np.shape[1]
        k = min(width, total.size)
        kth = np.partition(-total, k - 1)[k - 1]
        pool = np.nonzero(-total <= kth)[0]
        pool = sorted(pool, key=lambda f: (-total[f], live[f // V].tokens + [int(f % V)]))[:k]
        new_live = []
        for f in pool:
            parent, tok = live[f // V], int(f % V)
            h = Hypothesis(parent.tokens + [tok], float(total[f]),
                           parent.per_step_log_probs + [float(lp_np[f // V, tok])])
            (finished if tok == EOS else new_live).append(h)
        live = new_live
    finished.extend(live)
    for h in finished:
        h.log_prob = math.fsum(h.per_step_log_probs)
    return finished


@torch.no_grad()
def beam_search(scorer: Scorer, source, beam: int, max_len: int, length_penalty: float = 1.0,
                include_greedy: bool = True, monotone: bool = True) -> Hypothesis:
    """Shrinking beam search: a candidate ending in EOS leaves the beam and
    reduces its width by one.

    Finished hypotheses are ranked by log_prob / length**length_penalty, ties
    going to the lexicographically smaller token sequence. With
    ``include_greedy`` the greedy hypothesis also competes, so the result never
    scores below greedy. With ``monotone`` the finalists of every width
    1..beam compete too, so widening the beam never lowers the score.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    ctx = scorer.prepare([source])
    finished: list[Hypothesis] = []
    for width in (range(1, beam + 1) if monotone else [beam]):
        finished.extend(_beam_pass(scorer, ctx, width, max_len))
    if include_greedy:
        finished.append(greedy_batch(scorer, [source], max_len)[0])
    return min(finished, key=lambda h: (-h.score(length_penalty), h.tokens))
