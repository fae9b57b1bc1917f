import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from oracles import exhaustive_best
from podsum.checkpoint import save_model
from podsum.corpus import BOS
from podsum.decoding import greedy_batch
from podsum.ensemble import (Ensemble, EnsembleError, assemble, ensemble_decode, ensemble_step, from_paths,
                             load_manifest, mean_log_probs, preset_specs, write_manifest)
from podsum.seq2seq import ModelConfig, beam_decode, init_model
from podsum.training import checkpoint_name


def model(seed, vocab=10, positions=8):
    return init_model(ModelConfig(vocab_size=vocab, hidden_dim=8, num_heads=2, encoder_layers=1, decoder_layers=1,
                                  feedforward_dim=16, max_positions=positions, init_seed=seed))


SRC, PREFIX = [4, 5, 6], [BOS, 7]


class EnsembleTable:
    """Adapter exposing an ensemble to the enumeration oracle."""

    def __init__(self, ens):
        self.ens, self.V = ens, ens.vocab_size

    def log_probs(self, source, prefix):
        return ensemble_step(self.ens, source, prefix).tolist()


def test_single_member_is_identity():
    m = model(0)
    single = Ensemble([model(0)])
    direct = m.eval().next_log_probs(m.prepare([SRC]), torch.zeros(1, dtype=torch.long), torch.tensor([PREFIX]))[0]
    assert torch.max(torch.abs(ensemble_step(single, SRC, PREFIX) - direct)) <= 1e-12


@pytest.mark.parametrize("copies", [2, 3, 9])
def test_duplicate_members_equal_single(copies):
    single = ensemble_step(Ensemble([model(1)]), SRC, PREFIX)
    dup = ensemble_step(Ensemble([model(1) for _ in range(copies)]), SRC, PREFIX)
    assert torch.max(torch.abs(dup - single)) <= 1e-12


def test_two_member_mean_by_hand():
    a, b = model(0), model(1)
    pa, pb = (ensemble_step(Ensemble([m]), SRC, PREFIX).exp() for m in (a, b))
    got = ensemble_step(Ensemble([a, b]), SRC, PREFIX)
    torch.testing.assert_close(got, torch.log((pa + pb) / 2), rtol=0, atol=1e-12)
    assert got.exp().sum().item() == pytest.approx(1.0, abs=1e-12)


@given(st.lists(st.integers(0, 1000), min_size=2, max_size=4))
@settings(max_examples=20, deadline=None)
def test_mean_log_probs_bounded_by_members(seeds):
    lps = [torch.log_softmax(torch.tensor(np.random.default_rng(s).normal(size=7)), 0) for s in seeds]
    m = mean_log_probs(lps)
    stacked = torch.stack(lps)
    assert torch.all(m <= stacked.max(0).values + 1e-12)
    assert torch.all(m >= stacked.min(0).values - 1e-12)
    perm = mean_log_probs(lps[::-1])
    assert torch.max(torch.abs(perm - m)) <= 1e-12
    assert m.exp().sum().item() == pytest.approx(1.0, abs=1e-12)


def test_member_order_does_not_change_decode():
    ms = [model(s) for s in range(3)]
    a = ensemble_decode(Ensemble(ms), SRC, "beam", beam=3, max_len=5)
    b = ensemble_decode(Ensemble(ms[::-1]), SRC, "beam", beam=3, max_len=5)
    assert a.tokens == b.tokens and a.log_prob == pytest.approx(b.log_prob, abs=1e-12)


@pytest.mark.parametrize("lp", [0.0, 1.0])
def test_two_member_beam_matches_enumeration(lp):
    ens = Ensemble([model(3, vocab=5), model(4, vocab=5)])
    hyp = ensemble_decode(ens, (4,), "beam", beam=125, max_len=3, length_penalty=lp)
    tokens, score = exhaustive_best(EnsembleTable(ens), (4,), 3, lp)
    assert hyp.tokens == tokens
    assert hyp.score(lp) == pytest.approx(score, abs=1e-12)


def test_single_member_decode_equals_model_decode():
    m = model(2)
    assert ensemble_decode(Ensemble([model(2)]), SRC, "beam", 4, 6).tokens == beam_decode(m, SRC, 4, 6).tokens
    assert ensemble_decode(Ensemble([model(2)]), SRC, "greedy", max_len=6).tokens == \
        greedy_batch(m.eval(), [SRC], 6)[0].tokens


def test_mismatched_members_rejected():
    with pytest.raises(EnsembleError):
        Ensemble([model(0, vocab=10), model(1, vocab=11)])
    with pytest.raises(EnsembleError):
        Ensemble([model(0, positions=8), model(1, positions=9)])
    with pytest.raises(EnsembleError):
        Ensemble([])


@pytest.fixture
def ckpt_dir(tmp_path):
    for seed in range(3):
        for step in (10, 20, 30):
            save_model(tmp_path / checkpoint_name(seed, step), model(seed * 10 + step),
                       {"seed": seed, "step": step})
    return tmp_path


def test_presets_member_counts(ckpt_dir):
    specs1 = preset_specs("3x1", ckpt_dir)
    assert specs1 == [(0, 30), (1, 30), (2, 30)] and assemble(specs1, ckpt_dir).size == 3
    specs3 = preset_specs("3x3", ckpt_dir)
    assert len(specs3) == 9 and assemble(specs3, ckpt_dir).size == 9
    assert assemble([(0, 10), (0, 10)], ckpt_dir).size == 2


def test_missing_checkpoint_is_named(ckpt_dir):
    with pytest.raises(EnsembleError, match=r"\(5, 10\)"):
        assemble([(0, 10), (5, 10)], ckpt_dir)
    with pytest.raises(EnsembleError):
        preset_specs("4x1", ckpt_dir)


def test_manifest_and_paths_roundtrip(ckpt_dir):
    specs = preset_specs("3x1", ckpt_dir)
    write_manifest(ckpt_dir / "ens.json", specs, ckpt_dir)
    a = load_manifest(ckpt_dir / "ens.json")
    b = from_paths([ckpt_dir / checkpoint_name(*s) for s in specs])
    assert a.member_ids == specs
    assert torch.equal(ensemble_step(a, SRC, PREFIX), ensemble_step(b, SRC, PREFIX))
    (ckpt_dir / checkpoint_name(2, 30)).unlink()
    with pytest.raises(EnsembleError):
        load_manifest(ckpt_dir / "ens.json")


def test_mean_log_probs_formula():
    a = torch.log(torch.tensor([0.5, 0.5], dtype=torch.float64))
    b = torch.log(torch.tensor([0.9, 0.1], dtype=torch.float64))
    torch.testing.assert_close(mean_log_probs([a, b]), torch.log(torch.tensor([0.7, 0.3], dtype=torch.float64)),
                               rtol=0, atol=1e-12)
    assert math.isclose(mean_log_probs([a])[0].item(), math.log(0.5))
