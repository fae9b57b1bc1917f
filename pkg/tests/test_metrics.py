import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import f1, lcs_bruteforce, ngram_overlap_bruteforce
from podsum.metrics import (PairInput, RougeLMode, corpus_rouge, lcs_length, pcc, rouge_l, rouge_n)

tokens = st.lists(st.integers(0, 6), min_size=1, max_size=10)


def test_rouge_n_examples():
    assert rouge_n("a b c".split(), "a b c".split(), 1).f1 == 1.0
    assert rouge_n("a b".split(), "c d".split(), 1).f1 == 0.0
    s = rouge_n("the cat sat".split(), "the cat ran".split(), 1)
    assert s.precision == s.recall == pytest.approx(2 / 3) and s.f1 == pytest.approx(2 / 3)
    assert rouge_n(["a"], ["a"], 2).f1 == 0.0
    with pytest.raises(ValueError):
        rouge_n(["a"], ["a"], 0)


def test_rouge_l_examples():
    s = rouge_l("a b c d".split(), "a c b d".split())
    assert (s.precision, s.recall) == (0.75, 0.75)
    for mode in RougeLMode:
        x = "x y z".split()
        assert rouge_l(x, x, mode, [x], [x]).f1 == 1.0


def test_rouge_l_empty_warns():
    with pytest.warns(RuntimeWarning):
        assert rouge_l([], ["a"]).f1 == 0.0


def test_split_mode_requires_consistent_partition():
    with pytest.raises(ValueError):
        rouge_l(["a", "b"], ["a"], "split", [["a"]], [["a"]])


def test_split_mode_union_lcs_hand_example():
    # Reference sentence "a b c d" hit by "a b" and "c d" in separate candidate sentences.
    cand_s, ref_s = [["a", "b", "x"], ["c", "d"]], [["a", "b", "c", "d"]]
    cand, ref = [t for s in cand_s for t in s], ref_s[0]
    split = rouge_l(cand, ref, "split", cand_s, ref_s)
    whole = rouge_l(cand, ref, "whole")
    assert split.recall == 1.0 and whole.recall == 1.0
    # Clipping: a repeated reference token can only be matched once per candidate occurrence.
    s = rouge_l(["a"], ["a", "a"], "split", [["a"]], [["a"], ["a"]])
    assert s.precision == 1.0 and s.recall == 0.5


@given(tokens, tokens)
@settings(max_examples=60)
def test_rouge_n_matches_bruteforce(a, b):
    for n in (1, 2):
        assert rouge_n(a, b, n).f1 == pytest.approx(f1(*ngram_overlap_bruteforce(a, b, n)), abs=1e-12)


@given(tokens, tokens)
@settings(max_examples=60)
def test_lcs_matches_bruteforce(a, b):
    assert lcs_length(a, b) == lcs_bruteforce(a, b) <= min(len(a), len(b))


@given(st.lists(tokens, min_size=1, max_size=3), st.lists(tokens, min_size=1, max_size=3))
@settings(max_examples=60)
def test_split_clipping_bound(cs, rs):
    cand, ref = [t for s in cs for t in s], [t for s in rs for t in s]
    s = rouge_l(cand, ref, "split", cs, rs)
    assert 0.0 <= s.precision <= 1.0 and 0.0 <= s.recall <= 1.0
    overlap = round(s.recall * len(ref))
    common = sum(min(cand.count(t), ref.count(t)) for t in set(cand))
    assert overlap <= common


@given(tokens)
def test_identity(s):
    assert rouge_n(s, s, 1).f1 == 1.0
    assert rouge_l(s, s).f1 == 1.0


def test_pcc_examples():
    assert pcc([1, 2, 3], [3, 5, 7]) == pytest.approx(1.0)
    assert pcc([1, 2, 3], [-1, -2, -3]) == pytest.approx(-1.0)
    assert pcc([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    for bad in (([1, 1], [1, 2]), ([1], [1]), ([1, 2], [1, 2, 3])):
        with pytest.raises(ValueError, match="undefined correlation"):
            pcc(*bad)


def test_corpus_rouge_averaging():
    r = corpus_rouge([(["a"], ["a"]), (["a"], ["b"])])
    assert r.report() == {"r1": 50.0, "r2": 0.0, "rl": 50.0, "n_pairs": 2}
    single = corpus_rouge([(["a", "b"], ["a", "c"])])
    assert single.rl == rouge_l(["a", "b"], ["a", "c"]).f1
    with pytest.raises(ValueError):
        corpus_rouge([])


def test_corpus_rouge_matches_per_pair_mean():
    rng = random.Random(0)
    pairs = [([rng.randrange(5) for _ in range(rng.randint(1, 8))],
              [rng.randrange(5) for _ in range(rng.randint(1, 8))]) for _ in range(10)]
    r = corpus_rouge(pairs)
    assert r.r2 == pytest.approx(math.fsum(f1(*ngram_overlap_bruteforce(a, b, 2)) for a, b in pairs) / 10, abs=1e-12)
    assert r.rl == pytest.approx(math.fsum(f1(lcs_bruteforce(a, b), len(a), len(b)) for a, b in pairs) / 10, abs=1e-12)


def test_corpus_rouge_split_uses_sentences():
    cand = PairInput(["a", "b", "c", "d"], [["a", "b"], ["c", "d"]])
    ref = PairInput(["c", "d", "a", "b"], [["c", "d"], ["a", "b"]])
    assert corpus_rouge([(cand, ref)], "split").rl == 1.0
    assert corpus_rouge([(cand, ref)], "whole").rl == 0.5
