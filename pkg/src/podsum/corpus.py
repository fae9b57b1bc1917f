"""Episode ingestion: description cleaning, sentence segmentation, vocabulary,
length filtering, seeded train/dev splits and corpus statistics."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

_URL_RE = re.compile(r"(?:[A-Za-z][A-Za-z0-9+.\-]*://\S+|www\.\S+)")
_HANDLE_RE = re.compile(r"@[A-Za-z0-9_]+")
_SPACE_RE = re.compile(r"\s+")
_SENT_SPLIT_RE = re.compile(r"(?<=[.?!])\s+")
_ALNUM_RE = re.compile(r"[A-Za-z0-9]")
TERMINALS = (".", "?", "!")


class CorpusError(ValueError):
    pass


@dataclass
class RawEpisode:
    id: str
    show_id: str
    transcript: str
    description: str
    grade: int | None = None


@dataclass
class Episode:
    id: str
    sentences: list[list[int]]
    description_tokens: list[int]
    grade: int | None = None
    split: str | None = None
    extra: dict = field(default_factory=dict)

    @property
    def transcript_tokens(self) -> list[int]:
        return [t for s in self.sentences for t in s]

    def to_json(self) -> dict:
        out = {"id": self.id, "sentences": self.sentences, "description_tokens": self.description_tokens}
        if self.grade is not None:
            out["grade"] = self.grade
        if self.split is not None:
            out["split"] = self.split
        out.update(self.extra)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Episode":
        known = {"id", "sentences", "description_tokens", "grade", "split"}
        return cls(
            id=str(obj["id"]),
            sentences=[list(map(int, s)) for s in obj["sentences"]],
            description_tokens=list(map(int, obj["description_tokens"])),
            grade=obj.get("grade"),
            split=obj.get("split"),
            extra={k: v for k, v in obj.items() if k not in known},
        )


@dataclass(frozen=True)
class CorpusStats:
    mean_transcript_tokens: float
    std_transcript_tokens: float
    mean_description_tokens: float
    std_description_tokens: float
    episode_count: int


class Vocabulary:
    """Token <-> id map with PAD/BOS/EOS/UNK fixed at ids 0-3."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            raise CorpusError("vocabulary must start with the reserved tokens " + " ".join(RESERVED))
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}
        if len(self.stoi) != len(self.itos):
            raise CorpusError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, text_or_tokens: str | Sequence[str]) -> list[int]:
        toks = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else text_or_tokens
        return [self.stoi.get(t, UNK) for t in toks]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def terminal_ids(self) -> frozenset[int]:
        """Ids whose surface form ends a sentence."""
        return frozenset(i for i, t in enumerate(self.itos) if i > UNK and t.endswith(TERMINALS))

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.itos) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def clean_description(raw: str) -> str:
    text = _URL_RE.sub(" ", raw)
    text = _HANDLE_RE.sub(" ", text)
    return _SPACE_RE.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def segment_sentences(transcript: str) -> list[str]:
    """Split on `.`, `?` or `!` followed by whitespace; drop segments without
    alphanumeric characters."""
    text = _SPACE_RE.sub(" ", transcript).strip()
    parts = [p.strip() for p in _SENT_SPLIT_RE.split(text)]
    parts = [p for p in parts if _ALNUM_RE.search(p)]
    if not parts:
        raise CorpusError("empty transcript")
    return parts


def split_token_sentences(tokens: Sequence[int], terminal_ids: frozenset[int]) -> list[list[int]]:
    """Token-level counterpart of segment_sentences for decoded summaries."""
    sents, cur = [], []
    for t in tokens:
        cur.append(t)
        if t in terminal_ids:
            sents.append(cur)
            cur = []
    if cur:
        sents.append(cur)
    return sents


def build_vocab(corpus: Sequence[RawEpisode], max_size: int) -> Vocabulary:
    if max_size < 4:
        raise CorpusError("max_size must be at least 4")
    if not corpus:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for ep in corpus:
        counts.update(tokenize(ep.transcript))
        counts.update(tokenize(clean_description(ep.description)))
    for r in RESERVED:
        counts.pop(r, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked[: max_size - len(RESERVED)]]
    return Vocabulary(list(RESERVED) + keep)


def encode_episode(raw: RawEpisode, vocab: Vocabulary) -> Episode:
    sentences = [vocab.encode(s) for s in segment_sentences(raw.transcript)]
    desc = vocab.encode(clean_description(raw.description))
    # Uncleaned reference kept for probing metric sensitivity to reference processing.
    raw_desc = vocab.encode(_SPACE_RE.sub(" ", raw.description).strip())
    return Episode(id=raw.id, sentences=sentences, description_tokens=desc, grade=raw.grade,
                   extra={"raw_description_tokens": raw_desc})


def filter_short(corpus: Sequence[Episode], min_tokens: int = 5) -> list[Episode]:
    if min_tokens < 0:
        raise CorpusError("min_tokens must be non-negative")
    return [ep for ep in corpus if len(ep.description_tokens) >= min_tokens]


def split_corpus(corpus: Sequence[Episode], dev_count: int, seed: int) -> tuple[list[Episode], list[Episode]]:
    if not 0 <= dev_count <= len(corpus):
        raise CorpusError(f"dev_count={dev_count} outside [0, {len(corpus)}]")
    order = np.random.default_rng(seed).permutation(len(corpus))
    dev = [corpus[i] for i in order[:dev_count]]
    train = [corpus[i] for i in order[dev_count:]]
    return train, dev


def _mean_std(values: Sequence[int]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def corpus_stats(corpus: Sequence[Episode]) -> CorpusStats:
    if not corpus:
        raise CorpusError("cannot compute statistics of an empty corpus")
    mt, st = _mean_std([len(ep.transcript_tokens) for ep in corpus])
    md, sd = _mean_std([len(ep.description_tokens) for ep in corpus])
    return CorpusStats(mt, st, md, sd, len(corpus))


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_raw(path: str | Path) -> list[RawEpisode]:
    episodes, seen = [], set()
    for obj in read_jsonl(path):
        ep = RawEpisode(
            id=str(obj["id"]),
            show_id=str(obj.get("show_id", "")),
            transcript=obj["transcript"],
            description=obj.get("description", ""),
            grade=obj.get("grade"),
        )
        if not ep.id or ep.id in seen:
            raise CorpusError(f"episode id {ep.id!r} is empty or duplicated")
        if ep.grade is not None and ep.grade not in (0, 1, 2, 3):
            raise CorpusError(f"episode {ep.id}: grade {ep.grade!r} outside 0-3")
        seen.add(ep.id)
        episodes.append(ep)
    return episodes


def load_episodes(path: str | Path, split: str | None = None) -> list[Episode]:
    eps = [Episode.from_json(o) for o in read_jsonl(path)]
    if split is not None:
        eps = [e for e in eps if e.split == split]
    return eps


def save_episodes(path: str | Path, episodes: Iterable[Episode]) -> None:
    write_jsonl(path, (e.to_json() for e in episodes))


def preprocess(raw: Sequence[RawEpisode], vocab_size: int, min_desc_tokens: int = 5,
               dev_count: int = 0, seed: int = 0) -> tuple[Vocabulary, list[Episode]]:
    """Full preprocessing: vocab, encoding, short-description filtering, split.

    Returned episodes carry `split` in {"train", "dev"} and keep input order.
    """
    vocab = build_vocab(raw, vocab_size)
    episodes = filter_short([encode_episode(r, vocab) for r in raw], min_desc_tokens)
    _, dev = split_corpus(episodes, dev_count, seed)
    dev_ids = {e.id for e in dev}
    for e in episodes:
        e.split = "dev" if e.id in dev_ids else "train"
    return vocab, episodes
