"""Desk-scale directional check of the filtering and RL orderings.

One seed trains a hierarchical filter model and an ML summariser on
HIER-filtered training transcripts, then scores dev ROUGE-L under each
test-time filter. The ML model is then fine-tuned with the mixed
self-critical objective and rescored on the HIER-filtered dev set.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .corpus import RawEpisode, preprocess
from .decoding import greedy_batch
from .hier import init_hier, train_hier
from .metrics import corpus_rouge
from .pipeline import PipelineConfig, filter_episodes, hier_scores, make_examples
from .seq2seq import init_model
from .synth import synth_corpus
from .training import train


@dataclass
class DirectionalResult:
    seed: int
    rouge_l: dict[str, float] = field(default_factory=dict)
    rl_rouge_l: float = 0.0

    @property
    def ml_rouge_l(self) -> float:
        return self.rouge_l["hier"]


def _dev_rouge_l(model, episodes, max_len: int) -> float:
    exs = make_examples(episodes)
    hyps = greedy_batch(model, [x.source for x in exs], max_len)
    return corpus_rouge([(h.generated, x.target) for h, x in zip(hyps, exs)]).rl


def directional_check(seed: int, n_episodes: int = 200, dev_count: int = 40, corpus_seed: int = 0,
                      config: PipelineConfig | None = None) -> DirectionalResult:
    cfg = copy.deepcopy(config) if config is not None else PipelineConfig()
    cfg.seed = seed
    raw = [RawEpisode(d["id"], d["show_id"], d["transcript"], d["description"])
           for d in synth_corpus(n_episodes, corpus_seed)]
    vocab, eps = preprocess(raw, cfg.vocab_size, cfg.min_desc_tokens, dev_count, corpus_seed)
    train_eps = [e for e in eps if e.split == "train"]
    dev_eps = [e for e in eps if e.split == "dev"]

    hier, _ = train_hier(init_hier(cfg.hier_config(len(vocab))),
                         [(e.sentences, e.description_tokens) for e in train_eps], cfg.hier_optim())
    train_f = filter_episodes(train_eps, "hier", cfg.max_tokens, seed, hier_scores(hier, train_eps, "teacher"))
    model = init_model(cfg.model_config(len(vocab), seed))
    train(model, make_examples(train_f, cfg.max_positions), cfg.ml_config(seed))

    dev_scores = hier_scores(hier, dev_eps, "beam", cfg.hier_beam, cfg.hier_max_len)
    result = DirectionalResult(seed)
    for method in ("random", "truncate", "hier"):
        dev_f = filter_episodes(dev_eps, method, cfg.max_tokens, seed, dev_scores)
        result.rouge_l[method] = _dev_rouge_l(model, dev_f, cfg.max_len)

    train(model, make_examples(train_f, cfg.max_positions), cfg.rl_config(seed))
    dev_f = filter_episodes(dev_eps, "hier", cfg.max_tokens, seed, dev_scores)
    result.rl_rouge_l = _dev_rouge_l(model, dev_f, cfg.max_len)
    return result
