"""`podsum` command line. Exit codes: 0 success, 1 runtime error, 2 usage error."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click
import torch

from . import __version__
from . import pipeline as P
from .grader import GraderConfig
from .hier import HierConfig
from .optim import OptimConfig
from .seq2seq import ModelConfig
from .training import TrainingConfig


def _emit(obj) -> None:
    click.echo(json.dumps(obj, sort_keys=True))


def _split_paths(value: str | None) -> list[str]:
    return [p for p in (value or "").split(",") if p]


def _read_json(path: str | None) -> dict:
    if path is None:
        return {}
    if not Path(path).is_file():
        raise P.StageError(f"config file not found: {path}")
    return json.loads(Path(path).read_text(encoding="utf-8"))


class _Group(click.Group):
    """Maps runtime failures to exit code 1 with a one-line diagnostic."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (click.exceptions.Exit, click.ClickException, click.exceptions.Abort):
            raise
        except Exception as exc:  # noqa: BLE001
            click.echo(f"error: {exc}", err=True)
            ctx.exit(1)


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="podsum")
@click.option("--threads", type=click.IntRange(min=1), default=1, show_default=True,
              help="Cap on intra-op threads; 1 gives bit-exact reruns.")
@click.option("--force", is_flag=True, help="Rerun stages even when their manifest is current.")
@click.pass_context
def main(ctx, threads, force):
    """Two-stage podcast summarisation at desk scale."""
    torch.set_num_threads(threads)
    ctx.obj = {"force": force}


def _stage(ctx, name, params, inputs, outputs, body):
    m = P.run_stage(name, params, inputs, outputs, body, ctx.obj["force"])
    click.echo(f"{name}: {'up to date' if m.skipped else 'done'}", err=True)
    return m


@main.command()
@click.option("--episodes", type=click.IntRange(min=1), default=50, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", required=True)
@click.pass_context
def synth(ctx, episodes, seed, output):
    """Write a synthetic raw corpus with planted salient sentences."""
    _stage(ctx, "synth", {"episodes": episodes, "seed": seed}, [], [output],
           lambda: P.stage_synth(output, episodes, seed))


@main.command()
@click.option("--input", "input_", required=True)
@click.option("--output", required=True)
@click.option("--vocab", required=True)
@click.option("--vocab-size", type=int, default=10000, show_default=True)
@click.option("--min-desc-tokens", type=int, default=5, show_default=True)
@click.option("--dev-count", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def preprocess(ctx, input_, output, vocab, vocab_size, min_desc_tokens, dev_count, seed):
    """Clean, tokenise, segment and split a raw corpus."""
    params = {"vocab_size": vocab_size, "min_desc_tokens": min_desc_tokens, "dev_count": dev_count, "seed": seed}
    _stage(ctx, "preprocess", params, [input_], [output, vocab],
           lambda: P.stage_preprocess(input_, output, vocab, **params))


@main.command(name="filter")
@click.option("--corpus", required=True)
@click.option("--output", required=True)
@click.option("--method", type=click.Choice(["random", "truncate", "textrank", "hier"]), required=True)
@click.option("--max-tokens", type=click.IntRange(min=1), default=1024, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--attention", default=None, help="Attention score file (required for hier).")
@click.option("--embeddings", default=None, help="Checkpoint whose token embedding feeds TextRank.")
@click.option("--split", default=None, help="Only episodes of this split.")
@click.pass_context
def filter_cmd(ctx, corpus, output, method, max_tokens, seed, attention, embeddings, split):
    """Select a token-budgeted subset of sentences per episode."""
    inputs = [corpus] + [p for p in (attention, embeddings) if p]
    params = {"method": method, "max_tokens": max_tokens, "seed": seed, "split": split}
    _stage(ctx, "filter", params, inputs, [output],
           lambda: P.stage_filter(corpus, output, method, max_tokens, seed, attention, embeddings, split))


@main.command(name="hier-train")
@click.option("--corpus", required=True)
@click.option("--out", required=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--heads", type=int, default=4, show_default=True)
@click.option("--feedforward", type=int, default=128, show_default=True)
@click.option("--dropout", type=float, default=0.1, show_default=True)
@click.option("--lr", type=float, default=3e-3, show_default=True)
@click.option("--optimizer", type=click.Choice(["sgd", "adam"]), default="adam", show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--epochs", type=int, default=80, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", default="train", show_default=True)
@click.option("--log", "log_path", default=None)
@click.pass_context
def hier_train(ctx, corpus, out, hidden, heads, feedforward, dropout, lr, optimizer, batch, epochs, seed, split,
               log_path):
    """Train the hierarchical model used for attention-based filtering."""
    from .corpus import load_episodes

    vocab_size = 1 + max(t for e in load_episodes(corpus) for s in e.sentences + [e.description_tokens] for t in s)
    vocab_size = max(vocab_size, 4)
    hcfg = HierConfig(vocab_size, hidden, heads, feedforward, dropout, seed)
    ocfg = OptimConfig(lr, batch, epochs, 1.0, seed, optimizer)
    _stage(ctx, "hier-train", {"model": hcfg.to_dict(), "optim": dataclasses.asdict(ocfg), "split": split},
           [corpus], [out], lambda: P.stage_hier_train(corpus, out, hcfg, ocfg, split, log_path))


@main.command(name="hier-score")
@click.option("--corpus", required=True)
@click.option("--model", required=True)
@click.option("--output", required=True)
@click.option("--mode", type=click.Choice(["teacher", "beam"]), default="teacher", show_default=True)
@click.option("--beam", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--max-len", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--split", default=None)
@click.pass_context
def hier_score(ctx, corpus, model, output, mode, beam, max_len, split):
    """Write per-episode sentence importance scores {id, v_scores}."""
    params = {"mode": mode, "beam": beam, "max_len": max_len, "split": split}
    _stage(ctx, "hier-score", params, [corpus, model], [output],
           lambda: P.stage_hier_score(corpus, model, output, mode, beam, max_len, split))


@main.command()
@click.option("--corpus", required=True)
@click.option("--model-config", default=None, help="JSON file of summariser config fields.")
@click.option("--vocab", "vocab_path", default=None, help="Vocabulary file (sets vocab size; needed for grader reward).")
@click.option("--objective", type=click.Choice(["ml", "rl", "mixed"]), default="ml", show_default=True)
@click.option("--gamma", type=float, default=None)
@click.option("--reward", type=click.Choice(["rouge-l", "grader"]), default="rouge-l", show_default=True)
@click.option("--grader", default=None)
@click.option("--init", default=None, help="Start from this seq2seq checkpoint.")
@click.option("--freeze", "freeze_name", default="none", show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--optimizer", type=click.Choice(["sgd", "adam"]), default="sgd", show_default=True)
@click.option("--momentum", type=float, default=0.0, show_default=True)
@click.option("--batch", type=int, default=8, show_default=True)
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--max-len", type=int, default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--checkpoint-dir", required=True)
@click.option("--checkpoint-every", type=int, default=0, show_default=True)
@click.option("--split", default="train", show_default=True)
@click.option("--log", "log_path", default=None)
@click.pass_context
def train(ctx, corpus, model_config, vocab_path, objective, gamma, reward, grader, init, freeze_name, lr, optimizer,
          momentum, batch, epochs, max_len, seed, checkpoint_dir, checkpoint_every, split, log_path):
    """Train the summariser with the ML, RL or mixed objective."""
    from .corpus import Vocabulary

    fields = _read_json(model_config)
    if vocab_path is not None:
        fields.setdefault("vocab_size", len(Vocabulary.load(vocab_path)))
    fields.setdefault("init_seed", seed)
    if init is None and "vocab_size" not in fields:
        raise click.UsageError("give --vocab or a --model-config with vocab_size")
    mcfg = ModelConfig.from_dict(fields) if init is None else None
    if mcfg is not None:
        mcfg.validate()
    if objective == "mixed" and gamma is None:
        raise click.UsageError("--objective mixed needs --gamma")
    tcfg = TrainingConfig(objective=objective, gamma=1.0 if gamma is None else gamma, reward=reward, learning_rate=lr, batch_size=batch,
                          epochs=epochs, seed=seed, checkpoint_every=checkpoint_every, optimizer=optimizer,
                          momentum=momentum, max_len=max_len)
    tcfg.validate()
    inputs = [corpus] + [p for p in (init, grader, vocab_path) if p]
    params = {"model": mcfg.to_dict() if mcfg else None, "train": dataclasses.asdict(tcfg), "init": init,
              "freeze": freeze_name, "split": split}
    _stage(ctx, "train", params, inputs, [checkpoint_dir],
           lambda: P.stage_train(corpus, checkpoint_dir, mcfg, tcfg, init, freeze_name, grader, vocab_path, split,
                                 log_path))


@main.group(cls=_Group)
def grader():
    """Train or cross-validate the learned summary grader."""


def _grader_options(f):
    for opt in reversed([
        click.option("--graded", required=True, help="JSON-lines {episode_id, summary_tokens, grade}."),
        click.option("--corpus", required=True),
        click.option("--channels", type=click.IntRange(min=1), default=1, show_default=True),
        click.option("--embeddings", required=True, help="Comma-separated checkpoints, one per channel."),
        click.option("--vocab", "vocab_path", default=None, help="Splits flat summaries into sentences."),
        click.option("--folds", type=click.IntRange(min=2), default=9, show_default=True),
        click.option("--lr", type=float, default=GraderConfig.learning_rate, show_default=True),
        click.option("--epochs", type=int, default=GraderConfig.epochs, show_default=True),
        click.option("--batch", type=int, default=GraderConfig.batch_size, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
    ]):
        f = opt(f)
    return f


@grader.command(name="train")
@_grader_options
@click.option("--out", required=True)
@click.pass_context
def grader_train(ctx, graded, corpus, channels, embeddings, vocab_path, folds, lr, epochs, batch, seed, out):
    """Fit the grader on all graded examples."""
    embs = _split_paths(embeddings)
    cfg = GraderConfig(channels, lr, epochs, batch, seed)
    inputs = [graded, corpus, *embs] + ([vocab_path] if vocab_path else [])
    _stage(ctx.find_root(), "grader-train", {"grader": cfg.to_dict(), "embeddings": embs}, inputs, [out],
           lambda: P.stage_grader_train(graded, corpus, embs, out, cfg, vocab_path))


@grader.command(name="cv")
@_grader_options
@click.option("--output", required=True, help="JSON report with per-fold and pooled PCC.")
@click.pass_context
def grader_cv(ctx, graded, corpus, channels, embeddings, vocab_path, folds, lr, epochs, batch, seed, output):
    """Episode-grouped k-fold cross-validation."""
    embs = _split_paths(embeddings)
    cfg = GraderConfig(channels, lr, epochs, batch, seed)
    inputs = [graded, corpus, *embs] + ([vocab_path] if vocab_path else [])
    _stage(ctx.find_root(), "grader-cv", {"grader": cfg.to_dict(), "embeddings": embs, "folds": folds}, inputs,
           [output], lambda: P.stage_grader_cv(graded, corpus, embs, output, folds, cfg, vocab_path))
    _emit(json.loads(Path(output).read_text(encoding="utf-8")))


@main.command()
@click.option("--input", "input_", required=True, help="Processed (usually filtered) corpus.")
@click.option("--output", required=True)
@click.option("--model", default=None)
@click.option("--ensemble", default=None, help="Comma-separated member checkpoints.")
@click.option("--manifest", default=None, help="Ensemble manifest JSON.")
@click.option("--method", type=click.Choice(["greedy", "sample", "beam"]), default="beam", show_default=True)
@click.option("--beam", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--max-len", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--length-penalty", type=float, default=1.0, show_default=True)
@click.option("--vocab", "vocab_path", default=None, help="Adds sentences and text to each row.")
@click.option("--split", default=None)
@click.pass_context
def decode(ctx, input_, output, model, ensemble, manifest, method, beam, max_len, seed, length_penalty,
           vocab_path, split):
    """Decode summaries with one model or a token-level ensemble."""
    members = _split_paths(ensemble)
    if sum(bool(x) for x in (model, members, manifest)) != 1:
        raise click.UsageError("give exactly one of --model, --ensemble, --manifest")
    inputs = [input_] + ([model] if model else []) + members + ([manifest] if manifest else []) + (
        [vocab_path] if vocab_path else [])
    params = {"method": method, "beam": beam, "max_len": max_len, "seed": seed, "length_penalty": length_penalty,
              "split": split}
    _stage(ctx, "decode", params, inputs, [output],
           lambda: P.stage_decode(input_, output, method, beam, max_len, length_penalty, seed, model,
                                  members or None, manifest, vocab_path, split))


@main.command()
@click.option("--corpus", required=True)
@click.option("--vocab", "vocab_path", required=True)
@click.option("--output", required=True)
@click.option("--split", default=None)
@click.option("--raw", is_flag=True, help="Use descriptions before URL and handle removal.")
@click.pass_context
def references(ctx, corpus, vocab_path, output, split, raw):
    """Write reference summaries {id, tokens, sentences} for evaluate."""
    _stage(ctx, "references", {"split": split, "raw": raw}, [corpus, vocab_path], [output],
           lambda: P.stage_references(corpus, output, vocab_path, split, raw))


@main.command()
@click.option("--candidates", required=True)
@click.option("--references", required=True)
@click.option("--rouge-l-mode", type=click.Choice(["whole", "split"]), default="whole", show_default=True)
@click.option("--output", default=None, help="Also write the report here.")
def evaluate(candidates, references, rouge_l_mode, output):
    """Corpus ROUGE-1/2/L (x100) between id-matched candidate and reference files."""
    for p in (candidates, references):
        if not Path(p).is_file():
            raise P.StageError(f"input not found: {p}")
    report = P.evaluate_files(candidates, references, rouge_l_mode)
    if output:
        Path(output).write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    _emit(report)


@main.command()
@click.option("--workdir", required=True)
@click.option("--corpus", default=None, help="Raw corpus; defaults to a generated synthetic one.")
@click.option("--config", "config_path", default=None, help="JSON file of pipeline config overrides.")
@click.option("--seed", type=int, default=None, help="Global seed (overrides the config file).")
@click.option("--no-rl", is_flag=True, help="Stop at the ML-trained summariser.")
@click.pass_context
def pipeline(ctx, workdir, corpus, config_path, seed, no_rl):
    """Full recipe: preprocess, hier filter, ML then RL training, ensemble decode, evaluate."""
    fields = _read_json(config_path)
    if seed is not None:
        fields["seed"] = seed
    if no_rl:
        fields["gamma"] = None
    cfg = P.PipelineConfig.from_dict(fields)
    if corpus is not None and not Path(corpus).is_file():
        raise P.StageError(f"input not found: {corpus}")
    report = P.run_pipeline(workdir, cfg, corpus, ctx.obj["force"], lambda m: click.echo(m, err=True))
    _emit(report)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
