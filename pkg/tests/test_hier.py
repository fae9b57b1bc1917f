import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from podsum.corpus import BOS, EOS
from podsum.decoding import greedy_batch
from podsum.hier import (HierConfig, decoded_attention, hier_encode, init_hier, nll_batch,
                         teacher_forced_attention, train_hier)
from podsum.optim import OptimConfig
from podsum.training import finite_difference_check

CFG = HierConfig(vocab_size=16, hidden_dim=8, num_heads=2, feedforward_dim=16)

sentences = st.lists(st.lists(st.integers(4, 15), min_size=1, max_size=6), min_size=1, max_size=7)
targets = st.lists(st.integers(4, 15), min_size=1, max_size=6)


@given(sentences, targets)
@settings(max_examples=30, deadline=None)
def test_attention_rows_are_distributions(sents, target):
    attn = teacher_forced_attention(init_hier(CFG), sents, target + [EOS])
    assert attn.shape == (len(target) + 1, len(sents))
    assert np.all(attn >= 0)
    np.testing.assert_allclose(attn.sum(1), 1.0, atol=1e-12)


def test_single_sentence_gets_all_attention():
    attn = teacher_forced_attention(init_hier(CFG), [[4, 5, 6]], [7, 8, EOS])
    np.testing.assert_array_equal(attn, np.ones((3, 1)))


def test_single_step_target():
    assert teacher_forced_attention(init_hier(CFG), [[4], [5]], [EOS]).shape == (1, 2)


def test_out_of_vocab_target_rejected():
    with pytest.raises(ValueError):
        teacher_forced_attention(init_hier(CFG), [[4]], [99])


def test_long_transcript_accepted():
    sents = [[4 + i % 12, 5] for i in range(300)]
    assert hier_encode(init_hier(CFG), sents).shape == (300, CFG.hidden_dim)


def test_incremental_matches_full_pass():
    m = init_hier(CFG).eval()
    sents, target = [[4, 5], [6, 7, 8], [9]], [10, 11, 12, EOS]
    full_in = torch.tensor([[BOS] + target[:-1]])
    memory, pad = m.encode_batch([sents])
    logits, _ = m.decode(memory, pad, full_in)
    ctx = m.prepare([sents])
    for t in range(1, len(target) + 1):
        step = m.next_log_probs(ctx, torch.zeros(1, dtype=torch.long), full_in[:, :t])[0]
        torch.testing.assert_close(step, torch.log_softmax(logits[0, t - 1], -1), rtol=0, atol=1e-12)


def test_beam_one_trace_equals_greedy_trace():
    m = init_hier(CFG).eval()
    sents = [[4, 5], [6, 7, 8], [9, 10]]
    hyp = greedy_batch(m, [sents], 6)[0]
    expected = teacher_forced_attention(m, sents, hyp.tokens[1:])
    np.testing.assert_array_equal(decoded_attention(m, sents, beam=1, max_len=6), expected)


def test_overfits_tiny_corpus():
    corpus = [([[4, 5], [6, 7]], [6, 7]), ([[8, 9], [10]], [10, 9]),
              ([[11], [12, 13]], [12]), ([[14, 15], [4]], [14, 15, 4])]
    m = init_hier(CFG)
    _, curve = train_hier(m, corpus, OptimConfig(learning_rate=0.01, batch_size=4, epochs=300, optimizer="adam"))
    assert curve[-1] < 0.05 * curve[0]


def test_zero_learning_rate_keeps_loss():
    corpus = [([[4, 5], [6, 7]], [6, 7]), ([[8, 9]], [9])]
    m = init_hier(CFG)
    before, _ = nll_batch(m.eval(), corpus)
    train_hier(m, corpus, OptimConfig(learning_rate=0.0, batch_size=2, epochs=3))
    after, _ = nll_batch(m.eval(), corpus)
    assert after.item() == before.item()


def test_gradients_match_finite_differences():
    m = init_hier(CFG).eval()
    corpus = [([[4, 5], [6, 7, 8]], [6, 7]), ([[9], [10, 11]], [11])]
    rep = finite_difference_check(m, lambda: nll_batch(m, corpus)[0], n_coords=40, seed=0)
    assert rep.max_rel_error < 1e-4


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_hier(init_hier(CFG), [], OptimConfig())
