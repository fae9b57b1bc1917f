"""Independent brute-force references used by several test modules."""

from __future__ import annotations

import itertools

import numpy as np


def ngram_overlap_bruteforce(cand, ref, n):
    """Clipped n-gram matches by repeated removal from a list."""
    cg = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    rg = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    pool, hits = list(rg), 0
    for g in cg:
        if g in pool:
            pool.remove(g)
            hits += 1
    return hits, len(cg), len(rg)


def is_subsequence(sub, seq):
    it = iter(seq)
    return all(any(x == y for y in it) for x in sub)


def lcs_bruteforce(a, b):
    """Longest subsequence of `a` (by exhaustive subset search) contained in `b`."""
    for k in range(min(len(a), len(b)), 0, -1):
        for idx in itertools.combinations(range(len(a)), k):
            if is_subsequence([a[i] for i in idx], b):
                return k
    return 0


def f1(overlap, nc, nr):
    p = overlap / nc if nc else 0.0
    r = overlap / nr if nr else 0.0
    return 2 * p * r / (p + r) if p + r else 0.0


def pagerank_dense(weights, damping):
    """Stationary distribution via the leading eigenvector of the Google matrix."""
    n = len(weights)
    rows = weights.sum(axis=1)
    p = np.where(rows[:, None] > 0, weights / np.where(rows[:, None] > 0, rows[:, None], 1), 1.0 / n)
    g = damping * p.T + (1 - damping) / n * np.ones((n, n))
    vals, vecs = np.linalg.eig(g)
    v = np.real(vecs[:, np.argmax(np.real(vals))])
    return v / v.sum()


class TableScorer:
    """Decoder stand-in whose next-token distribution is a seeded function of
    (source, prefix). Implements the scorer protocol used by the decoders."""

    def __init__(self, vocab_size: int, seed: int = 0, scale: float = 2.0):
        self.V, self.seed, self.scale = vocab_size, seed, scale

    def prepare(self, sources):
        return [tuple(s) for s in sources]

    def log_probs(self, source, prefix):
        import zlib

        key = zlib.crc32(repr((self.seed, tuple(source), tuple(prefix))).encode())
        logits = np.random.default_rng(key).normal(size=self.V) * self.scale
        return logits - np.logaddexp.reduce(logits)

    def next_log_probs(self, ctx, rows, prefixes):
        import torch

        out = [self.log_probs(ctx[int(r)], [int(t) for t in p]) for r, p in zip(rows, prefixes)]
        return torch.tensor(np.array(out), dtype=torch.float64)


def exhaustive_best(scorer, source, max_len, length_penalty=1.0, eos=2, bos=1):
    """Best complete hypothesis by enumeration: ends in EOS or reaches max_len."""
    best = None
    frontier = [([bos], 0.0)]
    for _ in range(max_len):
        nxt = []
        for toks, lp in frontier:
            dist = scorer.log_probs(source, toks)
            for v in range(scorer.V):
                cand = (toks + [v], lp + dist[v])
                (nxt if v != eos else [None]).append(cand) if v != eos else None
                if v == eos or len(cand[0]) - 1 == max_len:
                    score = cand[1] / (len(cand[0]) - 1) ** length_penalty
                    key = (-score, cand[0])
                    if best is None or key < best:
                        best = key
                if v != eos:
                    nxt.append(cand)
        frontier = nxt
    return best[1], -best[0]
