"""Synthetic podcast corpus with planted salient sentences.

Each transcript opens with an intro sentence naming the episode's first
keyword; two more keyword sentences sit at random later positions among
filler chatter. The creator description lists the three keywords in order of
appearance, followed by a URL and an @handle that cleaning removes. A small
fraction of episodes get descriptions that fall below the length threshold
once cleaned.
"""

from __future__ import annotations

import numpy as np

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]

# One planted template per description slot.
SALIENT = [
    "welcome back , the topic is {k} .",
    "we also discuss {k} .",
    "finally we cover {k} .",
]


def _pseudo_words(n: int, syllables: int, seed: int, exclude: set[str] = frozenset()) -> list[str]:
    rng = np.random.default_rng(seed)
    words: list[str] = []
    seen = set(exclude)
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


FILLER = _pseudo_words(40, 2, seed=11)
KEYWORDS = _pseudo_words(12, 3, seed=23, exclude=set(FILLER))


def synth_episode(rng: np.random.Generator, index: int, short_rate: float = 0.05,
                  min_sentences: int = 18, max_sentences: int = 28) -> dict:
    n = int(rng.integers(min_sentences, max_sentences + 1))
    keys = [str(k) for k in rng.choice(KEYWORDS, size=3, replace=False)]
    later = sorted(int(p) for p in rng.choice(np.arange(1, n), size=2, replace=False))
    salient = {pos: SALIENT[slot].format(k=key) for slot, (pos, key) in enumerate(zip([0] + later, keys))}
    sentences = []
    for i in range(n):
        if i in salient:
            sentences.append(salient[i])
        else:
            words = rng.choice(FILLER, size=int(rng.integers(4, 10)))
            end = "?" if rng.random() < 0.15 else "."
            sentences.append(" ".join(str(w) for w in words) + " " + end)
    show = f"show{int(rng.integers(0, 20)):02d}"
    if rng.random() < short_rate:
        description = f"listen now https://pod.example/{index} @{show}_fm"
    else:
        description = f"{keys[0]} , {keys[1]} and {keys[2]} . more at https://pod.example/ep{index} @{show}_fm"
    return {
        "id": f"ep{index:05d}",
        "show_id": show,
        "transcript": " ".join(sentences),
        "description": description,
        "salient_positions": [0] + later,
    }


def synth_corpus(n_episodes: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    return [synth_episode(rng, i) for i in range(n_episodes)]


def synth_graded(n_episodes: int = 30, per_episode: int = 6, seed: int = 0, vocab_size: int = 200,
                 dim: int = 32, noise: float = 0.1):
    """Graded pairs whose grade is 3 * mean(diagonal similarity) + noise.

    Summary sentence j is a corrupted copy of transcript sentence j; the
    corruption rate varies per summary so grades spread over [0, 3].
    Returns (examples, embedding table).
    """
    from .grader import GradedExample, build_similarity

    rng = np.random.default_rng(seed)
    emb = rng.normal(size=(vocab_size, dim))
    examples = []
    for e in range(n_episodes):
        sents = [rng.integers(4, vocab_size, size=int(rng.integers(6, 11))).tolist()
                 for _ in range(int(rng.integers(6, 11)))]
        for _ in range(per_episode):
            rate = rng.uniform(0.0, 1.0)
            summary = []
            for s in sents[: int(rng.integers(3, 6))]:
                s = list(s)
                for k in range(len(s)):
                    if rng.random() < rate:
                        s[k] = int(rng.integers(4, vocab_size))
                summary.append(s)
            sim = build_similarity(sents, summary, [emb])[0]
            grade = 3.0 * float(np.mean(np.diag(sim))) + rng.normal(0.0, noise)
            examples.append(GradedExample(f"g{e:03d}", sents, summary, float(np.clip(grade, 0.0, 3.0))))
    return examples, emb
