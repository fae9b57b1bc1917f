"""Token-budgeted sentence filtering: Random, Truncate, TextRank and
hierarchical-attention (HIER) selection. Every method returns sentence
indices in their original order."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

Sentences = Sequence[Sequence[int]]
METHODS = ("random", "truncate", "textrank", "hier")


class FilterError(ValueError):
    pass


@dataclass
class FilterSelection:
    indices: list[int]
    total_tokens: int
    partial: bool = False

    def apply(self, sentences: Sentences, max_tokens: int | None = None) -> list[list[int]]:
        """Selected sentences; a partial selection is cut at max_tokens."""
        out = [list(sentences[i]) for i in self.indices]
        if self.partial and max_tokens is not None:
            out = [out[0][:max_tokens]]
        return out


@dataclass
class SentenceScores:
    scores: np.ndarray
    converged: bool = True
    iterations: int = 0


def _check(sentences: Sentences, max_tokens: int) -> None:
    if not sentences:
        raise FilterError("empty sentence list")
    if max_tokens < 1:
        raise FilterError("max_tokens must be >= 1")


def filter_truncate(sentences: Sentences, max_tokens: int) -> FilterSelection:
    """Longest whole-sentence prefix within budget. An oversized first sentence
    is kept alone and flagged partial (cut to max_tokens)."""
    _check(sentences, max_tokens)
    total, idx = 0, []
    for i, s in enumerate(sentences):
        if total + len(s) > max_tokens:
            break
        total += len(s)
        idx.append(i)
    if not idx:
        return FilterSelection([0], max_tokens, partial=True)
    return FilterSelection(idx, total)


def _greedy_fill(sentences: Sentences, order: Sequence[int], max_tokens: int) -> FilterSelection:
    total, chosen = 0, []
    for i in order:
        n = len(sentences[i])
        if total + n <= max_tokens:
            chosen.append(int(i))
            total += n
    return FilterSelection(sorted(chosen), total)


def filter_random(sentences: Sentences, max_tokens: int, seed: int) -> FilterSelection:
    _check(sentences, max_tokens)
    order = np.random.default_rng(seed).permutation(len(sentences))
    return _greedy_fill(sentences, order, max_tokens)


def select_top(sentences: Sentences, scores: SentenceScores | Sequence[float], max_tokens: int) -> FilterSelection:
    """Greedy by descending score (ties: lower index first); a sentence that
    does not fit is skipped and the next-ranked one is tried."""
    _check(sentences, max_tokens)
    values = np.asarray(scores.scores if isinstance(scores, SentenceScores) else scores, dtype=float)
    if len(values) != len(sentences):
        raise FilterError(f"{len(values)} scores for {len(sentences)} sentences")
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return _greedy_fill(sentences, order, max_tokens)


def cosine_graph(vectors: np.ndarray) -> np.ndarray:
    """Edge weights max(cos, 0) with a zero diagonal."""
    v = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0):
        raise FilterError("sentence vectors must be nonzero")
    u = v / norms[:, None]
    w = np.clip(u @ u.T, 0.0, None)
    np.fill_diagonal(w, 0.0)
    return w


def transition_matrix(weights: np.ndarray) -> np.ndarray:
    """Row-normalised weights; all-zero rows become uniform."""
    n = len(weights)
    rows = weights.sum(axis=1)
    p = np.empty_like(weights, dtype=float)
    zero = rows == 0
    p[~zero] = weights[~zero] / rows[~zero, None]
    p[zero] = 1.0 / n
    return p


def textrank_scores(sentences: Sentences, sentence_vectors, damping: float = 0.85,
                    tolerance: float = 1e-6, max_iter: int = 100) -> SentenceScores:
    """Damped PageRank by power iteration on the cosine similarity graph.

    Stops once the L1 change between iterates drops below tolerance.
    """
    vectors = np.asarray(sentence_vectors, dtype=float)
    if len(vectors) != len(sentences):
        raise FilterError("need exactly one vector per sentence")
    if not 0.0 < damping < 1.0:
        raise FilterError("damping must lie in (0, 1)")
    n = len(sentences)
    p = transition_matrix(cosine_graph(vectors))
    s = np.full(n, 1.0 / n)
    for it in range(1, max_iter + 1):
        nxt = (1.0 - damping) / n + damping * (p.T @ s)
        nxt /= nxt.sum()
        delta = np.abs(nxt - s).sum()
        s = nxt
        if delta < tolerance:
            return SentenceScores(s, True, it)
    return SentenceScores(s, False, max_iter)


def hier_importance(attention) -> SentenceScores:
    """Time-averaged sentence attention: v_i = (1/T) sum_t a[t, i]."""
    a = np.asarray(attention, dtype=float)
    if a.ndim != 2 or a.shape[0] == 0:
        raise FilterError("attention trace needs at least one decoder step")
    return SentenceScores(a.mean(axis=0))


def filter_sentences(method: str, sentences: Sentences, max_tokens: int, *, seed: int = 0,
                     scores: Sequence[float] | None = None, sentence_vectors=None) -> FilterSelection:
    """Dispatch one of the four methods. textrank needs sentence_vectors,
    hier needs precomputed scores."""
    if method == "truncate":
        return filter_truncate(sentences, max_tokens)
    if method == "random":
        return filter_random(sentences, max_tokens, seed)
    if method == "textrank":
        if sentence_vectors is None:
            raise FilterError("textrank filtering needs sentence vectors")
        return select_top(sentences, textrank_scores(sentences, sentence_vectors), max_tokens)
    if method == "hier":
        if scores is None:
            raise FilterError("hier filtering needs importance scores")
        return select_top(sentences, scores, max_tokens)
    raise FilterError(f"unknown filtering method {method!r}")


def mean_embedding_vectors(sentences: Sentences, embedding: np.ndarray) -> np.ndarray:
    """Sentence vectors as the mean of token embedding rows."""
    return np.stack([embedding[list(s)].mean(axis=0) for s in sentences])
