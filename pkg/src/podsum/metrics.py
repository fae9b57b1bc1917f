"""ROUGE-1/2/L F1 (whole-sequence and sentence-split ROUGE-L) and Pearson
correlation.

No stemming, stopword removal or length limits are applied: tokens are compared
as given.
"""

from __future__ import annotations

import enum
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

Tokens = Sequence[Hashable]


class RougeLMode(str, enum.Enum):
    WHOLE = "whole"
    SPLIT = "split"


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, overlap: float, cand_count: int, ref_count: int) -> "RougeScore":
        p = overlap / cand_count if cand_count > 0 else 0.0
        r = overlap / ref_count if ref_count > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


ZERO = RougeScore(0.0, 0.0, 0.0)


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Tokens, reference: Tokens, n: int) -> RougeScore:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
    overlap = sum((cand & ref).values())
    return RougeScore.from_counts(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_table(a: Tokens, b: Tokens) -> list[list[int]]:
    m, n = len(a), len(b)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        ai, row, prev = a[i - 1], table[i], table[i - 1]
        for j in range(1, n + 1):
            if ai == b[j - 1]:
                row[j] = prev[j - 1] + 1
            else:
                row[j] = row[j - 1] if row[j - 1] > prev[j] else prev[j]
    return table


def lcs_length(a: Tokens, b: Tokens) -> int:
    return _lcs_table(a, b)[len(a)][len(b)]


def _lcs_hits(ref: Tokens, cand: Tokens) -> set[int]:
    """Indices into `ref` lying on one LCS of (ref, cand)."""
    table = _lcs_table(ref, cand)
    i, j, hits = len(ref), len(cand), set()
    while i > 0 and j > 0:
        if ref[i - 1] == cand[j - 1]:
            hits.add(i - 1)
            i, j = i - 1, j - 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return hits


def _union_lcs_overlap(cand_sents: Sequence[Tokens], ref_sents: Sequence[Tokens]) -> int:
    cand_left = Counter(t for s in cand_sents for t in s)
    ref_left = Counter(t for s in ref_sents for t in s)
    overlap = 0
    for ref in ref_sents:
        hits: set[int] = set()
        for cand in cand_sents:
            hits |= _lcs_hits(ref, cand)
        for idx in sorted(hits):
            tok = ref[idx]
            if cand_left[tok] > 0 and ref_left[tok] > 0:
                cand_left[tok] -= 1
                ref_left[tok] -= 1
                overlap += 1
    return overlap


def rouge_l(candidate: Tokens, reference: Tokens, mode: RougeLMode | str = RougeLMode.WHOLE,
            candidate_sentences: Sequence[Tokens] | None = None,
            reference_sentences: Sequence[Tokens] | None = None) -> RougeScore:
    """ROUGE-L F1.

    In split mode the overlap is the summary-level union LCS: for each
    reference sentence the LCS hits against every candidate sentence are
    unioned, and matched tokens are clipped by their remaining multiplicity on
    both sides.
    """
    mode = RougeLMode(mode)
    if not candidate or not reference:
        warnings.warn("empty candidate or reference; ROUGE-L is 0", RuntimeWarning, stacklevel=2)
        return ZERO
    if mode is RougeLMode.WHOLE:
        return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))

    if candidate_sentences is None or reference_sentences is None:
        raise ValueError("split mode needs candidate_sentences and reference_sentences")
    if [t for s in candidate_sentences for t in s] != list(candidate):
        raise ValueError("candidate_sentences do not concatenate to candidate")
    if [t for s in reference_sentences for t in s] != list(reference):
        raise ValueError("reference_sentences do not concatenate to reference")
    overlap = _union_lcs_overlap(candidate_sentences, reference_sentences)
    return RougeScore.from_counts(overlap, len(candidate), len(reference))


def pcc(predictions: Sequence[float], targets: Sequence[float]) -> float:
    if len(predictions) != len(targets) or len(predictions) < 2:
        raise ValueError("undefined correlation: need two equal-length lists of at least 2 values")
    n = len(predictions)
    mx = math.fsum(predictions) / n
    my = math.fsum(targets) / n
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(predictions, targets))
    sxx = math.fsum((x - mx) ** 2 for x in predictions)
    syy = math.fsum((y - my) ** 2 for y in targets)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("undefined correlation: constant input")
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


@dataclass(frozen=True)
class CorpusRouge:
    r1: float
    r2: float
    rl: float
    n_pairs: int

    def report(self) -> dict:
        """Percentages rounded to 2 decimals, as printed by the CLI."""
        return {"r1": round(100 * self.r1, 2), "r2": round(100 * self.r2, 2),
                "rl": round(100 * self.rl, 2), "n_pairs": self.n_pairs}


@dataclass
class PairInput:
    tokens: Sequence[Hashable]
    sentences: Sequence[Sequence[Hashable]] | None = None


def corpus_rouge(pairs: Sequence[tuple], rouge_l_mode: RougeLMode | str = RougeLMode.WHOLE) -> CorpusRouge:
    """Unweighted mean of per-pair F1.

    Each pair element is either a token sequence or a PairInput carrying
    sentence boundaries (required for split mode).
    """
    if not pairs:
        raise ValueError("corpus_rouge needs at least one pair")
    mode = RougeLMode(rouge_l_mode)
    r1, r2, rl = [], [], []
    for cand, ref in pairs:
        cand = cand if isinstance(cand, PairInput) else PairInput(cand)
        ref = ref if isinstance(ref, PairInput) else PairInput(ref)
        r1.append(rouge_n(cand.tokens, ref.tokens, 1).f1)
        r2.append(rouge_n(cand.tokens, ref.tokens, 2).f1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if mode is RougeLMode.SPLIT:
                cs = cand.sentences if cand.sentences is not None else [cand.tokens]
                rs = ref.sentences if ref.sentences is not None else [ref.tokens]
                rl.append(rouge_l(cand.tokens, ref.tokens, mode, cs, rs).f1)
            else:
                rl.append(rouge_l(cand.tokens, ref.tokens, mode).f1)
    n = len(pairs)
    return CorpusRouge(math.fsum(r1) / n, math.fsum(r2) / n, math.fsum(rl) / n, n)
