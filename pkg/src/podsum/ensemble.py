"""Token-level ensembling: member next-token distributions are averaged in
probability space at every decoding step."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import torch

from . import decoding
from .checkpoint import load_model
from .decoding import Hypothesis
from .training import checkpoint_name

PRESETS = {"3x1": (3, 1), "3x3": (3, 3)}
_CKPT_RE = re.compile(r"ckpt_seed(\d+)_step(\d+)\.ckpt$")


class EnsembleError(ValueError):
    pass


def mean_log_probs(member_log_probs: Sequence[torch.Tensor]) -> torch.Tensor:
    """log((1/M) sum_m exp(lp_m)), reduced in member order."""
    if len(member_log_probs) == 1:
        return member_log_probs[0]
    stacked = torch.stack(list(member_log_probs))
    return torch.logsumexp(stacked, dim=0) - math.log(len(member_log_probs))


@dataclass
class Ensemble:
    members: list
    member_ids: list[tuple[int, int] | None] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise EnsembleError("an ensemble needs at least one member")
        if not self.member_ids:
            self.member_ids = [None] * len(self.members)
        if len(self.member_ids) != len(self.members):
            raise EnsembleError("one member id per member required")
        vocab = {m.config.vocab_size for m in self.members}
        if len(vocab) > 1:
            raise EnsembleError(f"members disagree on vocabulary size: {sorted(vocab)}")
        caps = {m.max_positions for m in self.members}
        if len(caps) > 1:
            raise EnsembleError(f"members disagree on positional capacity: {sorted(caps)}")
        for m in self.members:
            m.eval()

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def vocab_size(self) -> int:
        return self.members[0].config.vocab_size

    def prepare(self, sources):
        return [m.prepare(sources) for m in self.members]

    def next_log_probs(self, ctx, rows, prefixes) -> torch.Tensor:
        return mean_log_probs([m.next_log_probs(c, rows, prefixes) for m, c in zip(self.members, ctx)])


@torch.no_grad()
def ensemble_step(ensemble: Ensemble, source: Sequence[int], prefix: Sequence[int]) -> torch.Tensor:
    """Ensemble log-probabilities (V,) of the token following `prefix` (which starts with BOS)."""
    if not prefix:
        raise EnsembleError("prefix must start with BOS")
    ctx = ensemble.prepare([source])
    return ensemble.next_log_probs(ctx, torch.zeros(1, dtype=torch.long),
                                   torch.tensor([list(prefix)], dtype=torch.long))[0]


@torch.no_grad()
def ensemble_decode(ensemble: Ensemble, source: Sequence[int], method: str = "beam", beam: int = 4,
                    max_len: int = 32, length_penalty: float = 1.0) -> Hypothesis:
    if method == "greedy":
        return decoding.greedy_batch(ensemble, [source], max_len)[0]
    if method == "beam":
        return decoding.beam_search(ensemble, source, beam, max_len, length_penalty)
    raise EnsembleError(f"unknown decoding method {method!r}")


def assemble(specs: Sequence[tuple[int, int]], checkpoint_dir: str | Path) -> Ensemble:
    """Load one member per (seed, step); repeated specs are loaded repeatedly."""
    root = Path(checkpoint_dir)
    missing = [s for s in specs if not (root / checkpoint_name(*s)).is_file()]
    if missing:
        raise EnsembleError(f"missing checkpoint(s) for (seed, step): {missing}")
    members = [load_model(root / checkpoint_name(*s), expect="seq2seq") for s in specs]
    return Ensemble(members, [tuple(s) for s in specs])


def available_checkpoints(checkpoint_dir: str | Path) -> dict[int, list[int]]:
    """seed -> sorted steps found in a checkpoint directory."""
    found: dict[int, list[int]] = {}
    for p in Path(checkpoint_dir).iterdir():
        m = _CKPT_RE.search(p.name)
        if m:
            found.setdefault(int(m.group(1)), []).append(int(m.group(2)))
    return {k: sorted(v) for k, v in sorted(found.items())}


def preset_specs(preset: str, checkpoint_dir: str | Path) -> list[tuple[int, int]]:
    """Latest checkpoint(s) of the first seeds: "3x1" gives 3 members, "3x3" gives 9."""
    if preset not in PRESETS:
        raise EnsembleError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    n_seeds, n_ckpts = PRESETS[preset]
    found = available_checkpoints(checkpoint_dir)
    if len(found) < n_seeds:
        raise EnsembleError(f"preset {preset} needs {n_seeds} seeds, found {sorted(found)}")
    specs = []
    for seed in list(found)[:n_seeds]:
        steps = found[seed]
        if len(steps) < n_ckpts:
            raise EnsembleError(f"preset {preset} needs {n_ckpts} checkpoints for seed {seed}, found {steps}")
        specs.extend((seed, s) for s in steps[-n_ckpts:])
    return specs


def write_manifest(path: str | Path, ensemble_specs: Sequence[tuple[int, int]], checkpoint_dir: str | Path) -> None:
    members = [{"seed": s, "step": t, "path": str(Path(checkpoint_dir) / checkpoint_name(s, t))}
               for s, t in ensemble_specs]
    Path(path).write_text(json.dumps({"members": members}, indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> Ensemble:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    members, ids, missing = [], [], []
    for m in data["members"]:
        if not Path(m["path"]).is_file():
            missing.append((m.get("seed"), m.get("step"), m["path"]))
            continue
        members.append(load_model(m["path"], expect="seq2seq"))
        ids.append((m.get("seed"), m.get("step")))
    if missing:
        raise EnsembleError(f"missing checkpoint(s): {missing}")
    return Ensemble(members, ids)


def from_paths(paths: Sequence[str | Path]) -> Ensemble:
    missing = [str(p) for p in paths if not Path(p).is_file()]
    if missing:
        raise EnsembleError(f"missing checkpoint(s): {missing}")
    members = [load_model(p, expect="seq2seq") for p in paths]
    ids = [(m.meta.get("seed"), m.meta.get("step")) for m in members]
    return Ensemble(members, ids)
