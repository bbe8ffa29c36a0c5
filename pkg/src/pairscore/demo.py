"""Deterministic demo corpus: template-grammar English-like sentences.

These back the bundled demo files, the integration tests, and the drift
experiments, so everything runs offline with no external datasets.  The
generator is seeded and platform-stable.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

DETERMINERS = ["the", "a", "this", "that", "every", "one", "some"]
ADJECTIVES = [
    "big", "small", "old", "new", "fast", "slow", "quiet", "bright", "dark", "happy",
    "sad", "tall", "short", "warm", "cold", "clever", "simple", "strange", "busy", "calm",
    "green", "red", "heavy", "light", "early", "late", "young", "wide", "narrow", "clean",
]
NOUNS = [
    "cat", "dog", "bird", "house", "road", "river", "garden", "teacher", "student", "doctor",
    "farmer", "painter", "bridge", "market", "village", "city", "forest", "mountain", "library",
    "station", "window", "door", "table", "letter", "story", "song", "picture", "machine",
    "engine", "boat", "train", "child", "friend", "neighbor", "baker", "writer", "tower",
    "street", "valley", "island", "harbor", "school", "museum", "office", "kitchen", "meadow",
]
VERBS_INTRANS = [
    "sleeps", "runs", "waits", "smiles", "works", "sings", "travels", "arrives", "rests",
    "grows", "falls", "shines", "begins", "ends", "changes", "appears", "stands", "turns",
]
VERBS_TRANS = [
    "sees", "finds", "builds", "paints", "opens", "closes", "carries", "follows", "visits",
    "watches", "cleans", "repairs", "describes", "remembers", "crosses", "fills", "draws",
    "studies", "guards", "measures",
]
ADVERBS = [
    "quickly", "slowly", "quietly", "carefully", "often", "rarely", "always", "never",
    "gently", "suddenly", "early", "late", "together", "alone", "nearby", "everywhere",
]
PREPOSITIONS = ["near", "behind", "beside", "under", "over", "inside", "outside", "around", "past"]
CONNECTIVES = ["and", "while", "because", "before", "after"]


def _noun_phrase(rng) -> list[str]:
    out = [DETERMINERS[rng.integers(0, len(DETERMINERS))]]
    if rng.random() < 0.6:
        out.append(ADJECTIVES[rng.integers(0, len(ADJECTIVES))])
    if rng.random() < 0.12:
        out.append(ADJECTIVES[rng.integers(0, len(ADJECTIVES))])
    out.append(NOUNS[rng.integers(0, len(NOUNS))])
    return out


def _clause(rng) -> list[str]:
    out = _noun_phrase(rng)
    if rng.random() < 0.55:
        out.append(VERBS_TRANS[rng.integers(0, len(VERBS_TRANS))])
        out.extend(_noun_phrase(rng))
    else:
        out.append(VERBS_INTRANS[rng.integers(0, len(VERBS_INTRANS))])
    if rng.random() < 0.4:
        out.append(ADVERBS[rng.integers(0, len(ADVERBS))])
    if rng.random() < 0.35:
        out.append(PREPOSITIONS[rng.integers(0, len(PREPOSITIONS))])
        out.extend(_noun_phrase(rng))
    return out


def demo_sentence(rng) -> str:
    words = _clause(rng)
    if rng.random() < 0.25:
        words.append(CONNECTIVES[rng.integers(0, len(CONNECTIVES))])
        words.extend(_clause(rng))
    return " ".join(words)


def demo_sentences(n: int = 1000, seed: int = 7) -> list[str]:
    """n distinct generated sentences; pure function of (n, seed)."""
    rng = np.random.default_rng(seed)
    seen: dict[str, None] = {}
    while len(seen) < n:
        seen.setdefault(demo_sentence(rng), None)
    return list(seen)[:n]


def load_demo_corpus() -> list[str]:
    """The bundled 1k-sentence demo corpus."""
    text = resources.files("pairscore").joinpath("data/demo_corpus.txt").read_text("utf-8")
    return [line for line in text.splitlines() if line.strip()]


def load_demo_ratings_path() -> Path:
    with resources.as_file(resources.files("pairscore").joinpath("data/demo_ratings.tsv")) as p:
        return Path(p)
