"""Stage implementations behind the CLI, the run manifest, and the full recipe.

Every stage is a pure function of its declared inputs and config. A stage
writes a manifest next to its primary output; rerunning it with the same
config hash and input digests is a no-op unless forced.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .checkpoint import load_model, load_tensors, save_model
from .corpus import (EOS, Episode, Vocabulary, load_episodes, load_raw, preprocess, read_jsonl,
                     save_episodes, split_token_sentences, write_jsonl)
from .decoding import Hypothesis, beam_search, greedy_batch, sample_batch
from .ensemble import from_paths, load_manifest
from .filtering import FilterError, filter_sentences, mean_embedding_vectors
from .grader import (GradedExample, GraderConfig, GraderReward, build_similarity, cross_validate,
                     load_grader, save_grader, train_grader)
from .hier import HierConfig, decoded_attention, init_hier, teacher_forced_attention, train_hier
from .metrics import PairInput, corpus_rouge
from .optim import OptimConfig
from .seq2seq import ModelConfig, freeze, freeze_preset, init_model
from .synth import synth_corpus
from .training import Example, RewardFn, TrainingConfig, train


class StageError(RuntimeError):
    pass


# ---------------------------------------------------------------- manifests

def config_hash(config: dict) -> str:
    """sha256 of canonical JSON; insensitive to key order."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def digest(path: str | Path) -> str:
    """sha256 of a file, or of the sorted (name, digest) listing of a directory."""
    p = Path(path)
    h = hashlib.sha256()
    if p.is_dir():
        for child in sorted(p.rglob("*")):
            if child.is_file() and not child.name.endswith(".manifest.json"):
                h.update(str(child.relative_to(p)).encode())
                h.update(digest(child).encode())
    else:
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    stage: str
    config_hash: str
    inputs: dict[str, str]
    outputs: dict[str, str]
    wall_time: float
    version: str = __version__
    skipped: bool = False

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("skipped")
        return d


def manifest_path(primary_output: str | Path) -> Path:
    p = Path(primary_output)
    return p.parent / (p.name + ".manifest.json")


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run_stage(stage: str, config: dict, inputs: Sequence[str | Path], outputs: Sequence[str | Path],
              body: Callable[[], None], force: bool = False) -> RunManifest:
    """Run `body` unless an up-to-date manifest says the outputs are current."""
    for p in inputs:
        if not Path(p).exists():
            raise StageError(f"input not found: {p}")
    chash = config_hash({"stage": stage, **config})
    in_digests = {str(p): digest(p) for p in inputs}
    mpath = manifest_path(outputs[0])
    if not force and mpath.is_file():
        old = json.loads(mpath.read_text(encoding="utf-8"))
        if (old.get("config_hash") == chash and old.get("inputs") == in_digests
                and all(Path(p).exists() for p in outputs)
                and old.get("outputs") == {str(p): digest(p) for p in outputs}):
            return RunManifest(stage, chash, in_digests, old["outputs"], old.get("wall_time", 0.0), skipped=True)
    t0 = time.perf_counter()
    for p in outputs:
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    body()
    manifest = RunManifest(stage, chash, in_digests, {str(p): digest(p) for p in outputs},
                           time.perf_counter() - t0)
    _atomic_write_text(mpath, json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    return manifest


# ---------------------------------------------------------- in-memory steps

def episode_seed(seed: int, episode_id: str) -> int:
    return int(np.random.SeedSequence([seed, zlib.crc32(episode_id.encode("utf-8"))]).generate_state(1)[0])


def bow_vectors(sentences: Sequence[Sequence[int]]) -> np.ndarray:
    """Term-count vectors, the default sentence representation for TextRank."""
    dim = max(t for s in sentences for t in s) + 1
    out = np.zeros((len(sentences), dim))
    for i, s in enumerate(sentences):
        np.add.at(out[i], list(s), 1.0)
    return out


def hier_scores(model, episodes: Sequence[Episode], mode: str = "teacher", beam: int = 4,
                max_len: int = 20) -> dict[str, list[float]]:
    """Time-averaged sentence attention per episode (teacher-forced or along a beam decode)."""
    out = {}
    for e in episodes:
        if mode == "teacher":
            trace = teacher_forced_attention(model, e.sentences, e.description_tokens + [EOS])
        elif mode == "beam":
            trace = decoded_attention(model, e.sentences, beam, max_len)
        else:
            raise StageError(f"unknown attention mode {mode!r}")
        out[e.id] = trace.mean(axis=0).tolist()
    return out


def filter_episodes(episodes: Sequence[Episode], method: str, max_tokens: int, seed: int = 0,
                    scores: dict[str, Sequence[float]] | None = None,
                    embedding: np.ndarray | None = None) -> list[Episode]:
    out = []
    for e in episodes:
        kwargs = {}
        if method == "hier":
            if scores is None or e.id not in scores:
                raise FilterError(f"no attention scores for episode {e.id}")
            kwargs["scores"] = scores[e.id]
        elif method == "textrank":
            kwargs["sentence_vectors"] = (mean_embedding_vectors(e.sentences, embedding) if embedding is not None
                                          else bow_vectors(e.sentences))
        sel = filter_sentences(method, e.sentences, max_tokens, seed=episode_seed(seed, e.id), **kwargs)
        f = copy.deepcopy(e)
        f.sentences = sel.apply(e.sentences, max_tokens)
        f.extra["selected_indices"] = sel.indices
        out.append(f)
    return out


def make_examples(episodes: Sequence[Episode], max_positions: int | None = None) -> list[Example]:
    """Flatten sentences into sources; descriptions are cut to fit BOS/EOS in capacity."""
    exs = []
    for e in episodes:
        target = list(e.description_tokens)
        if max_positions is not None:
            target = target[: max_positions - 2]
        exs.append(Example(e.id, e.transcript_tokens, target, e.sentences))
    return exs


def decode_all(scorer, sources: Sequence[Sequence[int]], method: str, beam: int, max_len: int,
               length_penalty: float = 1.0, seed: int = 0, ids: Sequence[str] | None = None) -> list[Hypothesis]:
    if method == "greedy":
        return greedy_batch(scorer, sources, max_len)
    if method == "sample":
        ids = ids or [str(i) for i in range(len(sources))]
        return sample_batch(scorer, sources, max_len, [episode_seed(seed, i) for i in ids])
    if method == "beam":
        return [beam_search(scorer, s, beam, max_len, length_penalty) for s in sources]
    raise StageError(f"unknown decoding method {method!r}")


def load_embedding(path: str | Path) -> np.ndarray:
    _, _, _, tensors = load_tensors(path)
    if "token_embedding.weight" not in tensors:
        raise StageError(f"{path}: checkpoint has no token embedding")
    return tensors["token_embedding.weight"].numpy()


# ------------------------------------------------------------- file stages

def stage_synth(output, episodes: int, seed: int) -> None:
    write_jsonl(output, synth_corpus(episodes, seed))


def stage_preprocess(input, output, vocab_path, vocab_size: int, min_desc_tokens: int, dev_count: int,
                     seed: int) -> None:
    vocab, eps = preprocess(load_raw(input), vocab_size, min_desc_tokens, dev_count, seed)
    vocab.save(vocab_path)
    save_episodes(output, eps)


def _select(path, split: str | None) -> list[Episode]:
    eps = load_episodes(path, split)
    if not eps:
        raise StageError(f"{path}: no episodes" + (f" in split {split!r}" if split else ""))
    return eps


def stage_hier_train(corpus, out, config: HierConfig, optim: OptimConfig, split: str | None = "train",
                     log_path=None) -> list[float]:
    eps = _select(corpus, split)
    model, curve = train_hier(init_hier(config), [(e.sentences, e.description_tokens) for e in eps], optim)
    save_model(out, model, meta={"seed": optim.seed, "epochs": optim.epochs})
    if log_path is not None:
        write_jsonl(log_path, [{"epoch": i + 1, "loss_per_token": v} for i, v in enumerate(curve)])
    return curve


def stage_hier_score(corpus, model_path, output, mode: str, beam: int, max_len: int,
                     split: str | None = None) -> None:
    model = load_model(model_path, expect="hier")
    scores = hier_scores(model, _select(corpus, split), mode, beam, max_len)
    write_jsonl(output, [{"id": k, "v_scores": v} for k, v in scores.items()])


def stage_filter(corpus, output, method: str, max_tokens: int, seed: int, attention=None, embeddings=None,
                 split: str | None = None) -> None:
    scores = None
    if attention is not None:
        scores = {str(r["id"]): r["v_scores"] for r in read_jsonl(attention)}
    elif method == "hier":
        raise StageError("hier filtering needs --attention")
    emb = load_embedding(embeddings) if embeddings is not None else None
    save_episodes(output, filter_episodes(_select(corpus, split), method, max_tokens, seed, scores, emb))


def stage_train(corpus, checkpoint_dir, model_config: ModelConfig, config: TrainingConfig, init=None,
                freeze_name: str = "none", grader=None, vocab_path=None, split: str | None = "train",
                log_path=None) -> list[Path]:
    eps = _select(corpus, split)
    if init is not None:
        model = load_model(init, expect="seq2seq")
    else:
        model = init_model(model_config)
    if freeze_name != "none":
        freeze(model, freeze_preset(freeze_name, model.config))
    reward_fn = None
    if config.effective_gamma > 0 and config.reward == "grader":
        if grader is None or vocab_path is None:
            raise StageError("grader reward needs --grader and --vocab")
        g, _, meta = load_grader(grader)
        sources = [load_embedding(p) for p in meta.get("embeddings", [])]
        terminals = Vocabulary.load(vocab_path).terminal_ids()
        reward_fn = RewardFn("grader", GraderReward(g, sources, terminals))
    result = train(model, make_examples(eps, model.max_positions), config, reward_fn, checkpoint_dir, log_path)
    return result.checkpoints


def _scorer(model=None, ensemble: Sequence[str] | None = None, manifest=None):
    given = [x is not None and x != [] for x in (model, ensemble, manifest)]
    if sum(given) != 1:
        raise StageError("give exactly one of --model, --ensemble, --manifest")
    if model is not None:
        return load_model(model, expect="seq2seq")
    if ensemble:
        return from_paths(ensemble)
    return load_manifest(manifest)


def stage_decode(input, output, method: str, beam: int, max_len: int, length_penalty: float, seed: int,
                 model=None, ensemble=None, manifest=None, vocab_path=None, split: str | None = None) -> None:
    scorer = _scorer(model, ensemble, manifest)
    eps = _select(input, split)
    hyps = decode_all(scorer, [e.transcript_tokens for e in eps], method, beam, max_len, length_penalty, seed,
                      [e.id for e in eps])
    vocab = Vocabulary.load(vocab_path) if vocab_path is not None else None
    rows = []
    for e, h in zip(eps, hyps):
        row = {"id": e.id, "tokens": h.generated, "log_prob": h.log_prob}
        if vocab is not None:
            row["sentences"] = split_token_sentences(h.generated, vocab.terminal_ids()) if h.generated else []
            row["text"] = " ".join(vocab.decode(h.generated))
        rows.append(row)
    write_jsonl(output, rows)


def stage_references(corpus, output, vocab_path, split: str | None = None, raw: bool = False) -> None:
    """Reference rows from cleaned descriptions, or from uncleaned ones when `raw`."""
    terminals = Vocabulary.load(vocab_path).terminal_ids()
    out = []
    for e in _select(corpus, split):
        tokens = e.extra.get("raw_description_tokens", e.description_tokens) if raw else e.description_tokens
        out.append({"id": e.id, "tokens": tokens, "sentences": split_token_sentences(tokens, terminals)})
    write_jsonl(output, out)


def _pair_side(row: dict):
    tokens = row.get("tokens", row.get("description_tokens"))
    if tokens is None:
        raise StageError(f"row {row.get('id')!r} has no tokens")
    return list(tokens), row.get("sentences") or None


def evaluate_files(candidates, references, rouge_l_mode: str = "whole") -> dict:
    refs = {str(r["id"]): _pair_side(r) for r in read_jsonl(references)}
    cands = {str(r["id"]): _pair_side(r) for r in read_jsonl(candidates)}
    missing = sorted(set(cands) ^ set(refs))
    if missing:
        raise StageError(f"candidate/reference ids do not match: {missing[:5]}")
    pairs = [(PairInput(*cands[k]), PairInput(*refs[k])) for k in sorted(cands)]
    return corpus_rouge(pairs, rouge_l_mode).report()


def load_graded(graded, corpus, vocab_path=None) -> list[GradedExample]:
    episodes = {e.id: e for e in load_episodes(corpus)}
    terminals = Vocabulary.load(vocab_path).terminal_ids() if vocab_path is not None else None
    out = []
    for r in read_jsonl(graded):
        eid = str(r["episode_id"])
        if eid not in episodes:
            raise StageError(f"graded example refers to unknown episode {eid!r}")
        toks = r["summary_tokens"]
        if toks and isinstance(toks[0], list):
            summary = [list(map(int, s)) for s in toks if s]
        elif terminals is not None:
            summary = split_token_sentences(list(map(int, toks)), terminals)
        else:
            summary = [list(map(int, toks))]
        out.append(GradedExample(eid, episodes[eid].sentences, summary, float(r["grade"])))
    return out


def grader_data(graded, corpus, embeddings: Sequence[str], channels: int, vocab_path=None):
    if len(embeddings) != channels:
        raise StageError(f"--channels {channels} needs {channels} embedding checkpoint(s), got {len(embeddings)}")
    examples = load_graded(graded, corpus, vocab_path)
    sources = [load_embedding(p) for p in embeddings]
    mats = [build_similarity(e.episode_sentences, e.summary_sentences, sources) for e in examples]
    return examples, mats


def stage_grader_train(graded, corpus, embeddings, out, config: GraderConfig, vocab_path=None) -> list[float]:
    examples, mats = grader_data(graded, corpus, embeddings, config.channels, vocab_path)
    model, curve = train_grader(mats, [e.grade for e in examples], config)
    save_grader(out, model, config, {"embeddings": [str(p) for p in embeddings]})
    return curve


def stage_grader_cv(graded, corpus, embeddings, output, folds: int, config: GraderConfig, vocab_path=None) -> dict:
    examples, mats = grader_data(graded, corpus, embeddings, config.channels, vocab_path)
    report = cross_validate([e.episode_id for e in examples], mats, [e.grade for e in examples], folds,
                            config).to_json()
    _atomic_write_text(Path(output), json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


# ------------------------------------------------------------ full recipe

@dataclass
class PipelineConfig:
    seed: int = 0
    synth_episodes: int = 50
    vocab_size: int = 200
    min_desc_tokens: int = 5
    dev_count: int = 10
    max_tokens: int = 40
    # hierarchical filter model
    hier_hidden: int = 32
    hier_heads: int = 4
    hier_feedforward: int = 128
    hier_dropout: float = 0.1
    hier_lr: float = 3e-3
    hier_epochs: int = 80
    hier_optimizer: str = "adam"
    hier_beam: int = 4
    hier_max_len: int = 20
    # summariser
    hidden_dim: int = 64
    num_heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    feedforward_dim: int = 128
    max_positions: int = 48
    dropout_rate: float = 0.1
    freeze: str = "none"
    batch_size: int = 8
    optimizer: str = "adam"
    ml_lr: float = 1e-3
    ml_epochs: int = 60
    grad_clip_norm: float = 1.0
    gamma: float | None = 0.9
    rl_lr: float = 1e-4
    rl_epochs: int = 2
    max_len: int = 20
    # ensemble decoding
    shuffles: int = 3
    checkpoints_per_shuffle: int = 1
    decode_method: str = "beam"
    beam: int = 4
    length_penalty: float = 1.0
    rouge_l_mode: str = "split"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise StageError(f"unknown pipeline config key(s): {unknown}")
        return cls(**d)

    def hier_config(self, vocab_size: int) -> HierConfig:
        return HierConfig(vocab_size, self.hier_hidden, self.hier_heads, self.hier_feedforward,
                          self.hier_dropout, self.seed)

    def hier_optim(self) -> OptimConfig:
        return OptimConfig(learning_rate=self.hier_lr, batch_size=self.batch_size, epochs=self.hier_epochs,
                           grad_clip_norm=self.grad_clip_norm, seed=self.seed, optimizer=self.hier_optimizer,
                           momentum=0.0)

    def model_config(self, vocab_size: int, seed: int) -> ModelConfig:
        return ModelConfig(vocab_size, self.hidden_dim, self.num_heads, self.encoder_layers, self.decoder_layers,
                           self.feedforward_dim, self.max_positions, self.dropout_rate, seed)

    def ml_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(objective="ml", learning_rate=self.ml_lr, batch_size=self.batch_size,
                              epochs=self.ml_epochs, grad_clip_norm=self.grad_clip_norm, seed=seed,
                              optimizer=self.optimizer, max_len=self.max_len)

    def rl_config(self, seed: int) -> TrainingConfig:
        return TrainingConfig(objective="mixed", gamma=self.gamma, learning_rate=self.rl_lr,
                              batch_size=self.batch_size, epochs=self.rl_epochs,
                              grad_clip_norm=self.grad_clip_norm, seed=seed, optimizer=self.optimizer,
                              max_len=self.max_len)


def latest_checkpoints(directory: str | Path, k: int) -> list[Path]:
    found = sorted(Path(directory).glob("ckpt_seed*_step*.ckpt"),
                   key=lambda p: int(p.stem.rsplit("step", 1)[1]))
    if len(found) < k:
        raise StageError(f"{directory}: need {k} checkpoint(s), found {len(found)}")
    return found[-k:]


def run_pipeline(workdir: str | Path, config: PipelineConfig, raw_corpus: str | Path | None = None,
                 force: bool = False, log: Callable[[str], None] = lambda msg: None) -> dict:
    """preprocess, hier-train, filter train, ML, RL, filter dev, ensemble decode, evaluate."""
    w = Path(workdir)
    w.mkdir(parents=True, exist_ok=True)
    cfg = config
    manifests: list[RunManifest] = []

    def stage(name, params, inputs, outputs, body):
        m = run_stage(name, params, inputs, outputs, body, force)
        manifests.append(m)
        log(f"{name}: {'up to date' if m.skipped else f'done in {m.wall_time:.1f}s'}")
        return m

    raw = Path(raw_corpus) if raw_corpus is not None else w / "raw.jsonl"
    if raw_corpus is None:
        stage("synth", {"episodes": cfg.synth_episodes, "seed": cfg.seed}, [], [raw],
              lambda: stage_synth(raw, cfg.synth_episodes, cfg.seed))
    corpus, vocab = w / "corpus.jsonl", w / "vocab.txt"
    pre = {"vocab_size": cfg.vocab_size, "min_desc_tokens": cfg.min_desc_tokens, "dev_count": cfg.dev_count,
           "seed": cfg.seed}
    stage("preprocess", pre, [raw], [corpus, vocab],
          lambda: stage_preprocess(raw, corpus, vocab, **pre))
    vsize = len(Vocabulary.load(vocab))

    hier = w / "hier.ckpt"
    hcfg, hopt = cfg.hier_config(vsize), cfg.hier_optim()
    stage("hier-train", {"model": hcfg.to_dict(), "optim": dataclasses.asdict(hopt)}, [corpus], [hier],
          lambda: stage_hier_train(corpus, hier, hcfg, hopt, "train", w / "hier_log.jsonl"))

    att_train, train_f = w / "attention_train.jsonl", w / "train_filtered.jsonl"
    stage("hier-score", {"mode": "teacher", "split": "train"}, [corpus, hier], [att_train],
          lambda: stage_hier_score(corpus, hier, att_train, "teacher", cfg.hier_beam, cfg.hier_max_len, "train"))
    fparams = {"method": "hier", "max_tokens": cfg.max_tokens, "seed": cfg.seed, "split": "train"}
    stage("filter", fparams, [corpus, att_train], [train_f],
          lambda: stage_filter(corpus, train_f, "hier", cfg.max_tokens, cfg.seed, att_train, None, "train"))

    final_dirs = []
    for k in range(cfg.shuffles):
        seed = cfg.seed + k
        ml_dir, mcfg, tcfg = w / "ml" / f"seed{seed}", cfg.model_config(vsize, seed), cfg.ml_config(seed)
        rl_on = cfg.gamma is not None and cfg.gamma > 0
        if not rl_on:
            tcfg.checkpoint_every = _spacing(train_f, cfg) if cfg.checkpoints_per_shuffle > 1 else 0
        stage("train", {"model": mcfg.to_dict(), "train": dataclasses.asdict(tcfg), "freeze": cfg.freeze},
              [train_f], [ml_dir],
              lambda: stage_train(train_f, ml_dir, mcfg, tcfg, None, cfg.freeze, None, None, None,
                                  ml_dir / "log.jsonl"))
        if not rl_on:
            final_dirs.append(ml_dir)
            continue
        rl_dir, rcfg = w / "rl" / f"seed{seed}", cfg.rl_config(seed)
        rcfg.checkpoint_every = _spacing(train_f, cfg) if cfg.checkpoints_per_shuffle > 1 else 0
        init = latest_checkpoints(ml_dir, 1)[0]
        stage("train", {"train": dataclasses.asdict(rcfg), "init": str(init), "freeze": cfg.freeze},
              [train_f, init], [rl_dir],
              lambda: stage_train(train_f, rl_dir, mcfg, rcfg, init, cfg.freeze, None, None, None,
                                  rl_dir / "log.jsonl"))
        final_dirs.append(rl_dir)

    att_dev, dev_f = w / "attention_dev.jsonl", w / "dev_filtered.jsonl"
    stage("hier-score", {"mode": "beam", "split": "dev", "beam": cfg.hier_beam, "max_len": cfg.hier_max_len},
          [corpus, hier], [att_dev],
          lambda: stage_hier_score(corpus, hier, att_dev, "beam", cfg.hier_beam, cfg.hier_max_len, "dev"))
    stage("filter", {**fparams, "split": "dev"}, [corpus, att_dev], [dev_f],
          lambda: stage_filter(corpus, dev_f, "hier", cfg.max_tokens, cfg.seed, att_dev, None, "dev"))

    members = [p for d in final_dirs for p in latest_checkpoints(d, cfg.checkpoints_per_shuffle)]
    ens = w / "ensemble.json"
    _atomic_write_text(ens, json.dumps({"members": [
        {"seed": int(p.stem.split("seed")[1].split("_")[0]), "step": int(p.stem.rsplit("step", 1)[1]),
         "path": str(p)} for p in members]}, indent=2) + "\n")
    preds, refs, report = w / "predictions.jsonl", w / "references.jsonl", w / "report.json"
    dparams = {"method": cfg.decode_method, "beam": cfg.beam, "max_len": cfg.max_len,
               "length_penalty": cfg.length_penalty, "seed": cfg.seed}
    stage("decode", dparams, [dev_f, vocab, *members], [preds],
          lambda: stage_decode(dev_f, preds, cfg.decode_method, cfg.beam, cfg.max_len, cfg.length_penalty,
                               cfg.seed, manifest=ens, vocab_path=vocab))
    stage("references", {"split": "dev"}, [corpus, vocab], [refs],
          lambda: stage_references(corpus, refs, vocab, "dev"))
    result: dict = {}

    def _eval():
        result.update(evaluate_files(preds, refs, cfg.rouge_l_mode))
        _atomic_write_text(report, json.dumps(result, indent=2, sort_keys=True) + "\n")

    stage("evaluate", {"rouge_l_mode": cfg.rouge_l_mode}, [preds, refs], [report], _eval)
    return json.loads(report.read_text(encoding="utf-8"))


def _spacing(train_file, cfg: PipelineConfig) -> int:
    """Checkpoint every epoch so the last epochs supply the per-shuffle checkpoints."""
    n = len(load_episodes(train_file))
    return -(-n // cfg.batch_size)
