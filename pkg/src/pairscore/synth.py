"""Synthetic sentence-pair generation by perturbing corpus segments.

Three perturbation families: mask-filling under a small n-gram language model
(scattered or contiguous masks, beam-search fill), a round-trip translation
plug point (with an offline stub), and word dropping.  Generation is a pure
function of (segments, config, seed) so corpora are byte-reproducible.
"""

from __future__ import annotations

import json
import math
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ScorerProtocolError
from .text import RESERVED_TOKENS, TokenSeq, Vocabulary

MAX_MASKS = 15

MASK_SCATTER = "mask_fill_scatter"
MASK_CONTIGUOUS = "mask_fill_contiguous"
BACKTRANSLATION = "backtranslation"
WORD_DROP = "word_drop"
_BASE_KINDS = (MASK_SCATTER, MASK_CONTIGUOUS, BACKTRANSLATION)


@dataclass(frozen=True)
class Origin:
    """How a perturbation was produced.  word_drop wraps one of the base kinds."""

    kind: str
    parent: str | None = None

    def __post_init__(self):
        if self.kind == WORD_DROP:
            if self.parent not in _BASE_KINDS:
                raise DataError(f"word_drop origin must wrap one of {_BASE_KINDS}")
        elif self.kind in _BASE_KINDS:
            if self.parent is not None:
                raise DataError(f"{self.kind} origin cannot have a parent")
        else:
            raise DataError(f"unknown origin kind {self.kind!r}")

    def base_kind(self) -> str:
        return self.parent if self.kind == WORD_DROP else self.kind


@dataclass(frozen=True)
class SyntheticExample:
    z: TokenSeq
    z_tilde: TokenSeq
    origin: Origin
    seed: int

    def __post_init__(self):
        if len(self.z) == 0:
            raise DataError("synthetic example requires a non-empty source segment")


@dataclass(frozen=True)
class MaskPlan:
    positions: tuple[int, ...]
    strategy: str

    def __post_init__(self):
        if list(self.positions) != sorted(set(self.positions)):
            raise DataError("mask positions must be sorted and unique")
        if len(self.positions) > MAX_MASKS:
            raise DataError(f"at most {MAX_MASKS} masks per sentence")
        if self.strategy == "contiguous" and self.positions:
            span = self.positions[-1] - self.positions[0] + 1
            if span != len(self.positions):
                raise DataError("contiguous plan must be one unbroken run")
        elif self.strategy not in ("scatter", "contiguous"):
            raise DataError(f"unknown mask strategy {self.strategy!r}")


def plan_masks(z: TokenSeq, strategy: str, seed: int) -> MaskPlan:
    """Choose mask positions: scattered uniform draws or one contiguous span.

    Scatter draws the mask count uniformly from [1, min(15, |z|)]; contiguous
    draws a start uniformly and a length uniform over what fits in-bounds.
    """
    if len(z) == 0:
        raise DataError("cannot plan masks for an empty segment")
    rng = np.random.default_rng(seed)
    n = len(z)
    if strategy == "scatter":
        count = int(rng.integers(1, min(MAX_MASKS, n) + 1))
        positions = tuple(sorted(int(p) for p in rng.choice(n, size=count, replace=False)))
    elif strategy == "contiguous":
        start = int(rng.integers(0, n))
        length = int(rng.integers(1, min(MAX_MASKS, n - start) + 1))
        positions = tuple(range(start, start + length))
    else:
        raise DataError(f"unknown mask strategy {strategy!r}")
    return MaskPlan(positions, strategy)


class BigramLM:
    """Interpolated bigram language model with add-k smoothing.

    log P(t | prev) mixes a bigram estimate with the unigram one; a None
    ``prev`` uses sentence-start counts.  With interpolation 0 this degrades
    to a pure unigram model.
    """

    def __init__(self, vocab: Vocabulary, add_k: float = 0.1, interpolation: float = 0.7):
        if not 0.0 <= interpolation <= 1.0:
            raise DataError("interpolation must lie in [0, 1]")
        if add_k <= 0:
            raise DataError("add_k must be positive")
        self.vocab = vocab
        self.add_k = add_k
        self.interpolation = interpolation
        self._unigram: Counter = Counter()
        self._bigram: dict[str | None, Counter] = defaultdict(Counter)
        self._context_totals: Counter = Counter()
        self._total = 0
        self._candidates: tuple[tuple[str, int], ...] = ()

    @classmethod
    def train(
        cls,
        segments: Iterable[Sequence[str]],
        vocab: Vocabulary,
        add_k: float = 0.1,
        interpolation: float = 0.7,
    ) -> "BigramLM":
        lm = cls(vocab, add_k=add_k, interpolation=interpolation)
        for seg in segments:
            toks = list(seg.tokens if isinstance(seg, TokenSeq) else seg)
            prev: str | None = None
            for tok in toks:
                lm._unigram[tok] += 1
                lm._bigram[prev][tok] += 1
                lm._context_totals[prev] += 1
                lm._total += 1
                prev = tok
        candidates = sorted(
            (tok for tok in lm._unigram if tok not in RESERVED_TOKENS),
            key=vocab.id,
        )
        lm._candidates = tuple((tok, vocab.id(tok)) for tok in candidates)
        return lm

    @classmethod
    def train_unigram(cls, segments, vocab, add_k: float = 0.1) -> "BigramLM":
        return cls.train(segments, vocab, add_k=add_k, interpolation=0.0)

    def candidates(self) -> tuple[tuple[str, int], ...]:
        return self._candidates

    def _n_types(self) -> int:
        return max(1, len(self._candidates))

    def log_prob(self, token: str, prev: str | None) -> float:
        k, v = self.add_k, self._n_types()
        p_uni = (self._unigram[token] + k) / (self._total + k * v)
        ctx_total = self._context_totals[prev]
        p_bi = (self._bigram[prev][token] + k) / (ctx_total + k * v)
        lam = self.interpolation
        return math.log(lam * p_bi + (1.0 - lam) * p_uni)


def fill_masks(z: TokenSeq, plan: MaskPlan, lm, beam_width: int = 8) -> TokenSeq:
    """Fill masked positions left-to-right with beam search under ``lm``.

    Beam states are scored by the sum of log-probabilities of the tokens
    filled so far; ties are broken toward smaller vocabulary ids.  Output
    length equals input length and unmasked tokens are untouched.
    """
    if beam_width < 1:
        raise DataError("beam_width must be >= 1")
    candidates = lm.candidates()
    if not candidates:
        raise DataError("language model has an empty vocabulary")
    if not plan.positions:
        return z

    masked = set(plan.positions)
    # beam entry: (score, fill tokens so far, fill ids so far)
    beam: list[tuple[float, tuple[str, ...], tuple[int, ...]]] = [(0.0, (), ())]
    for slot_index, pos in enumerate(plan.positions):
        expansions = []
        for score, fills, fill_ids in beam:
            if pos == 0:
                prev = None
            elif pos - 1 in masked:
                prev = fills[plan.positions.index(pos - 1)]
            else:
                prev = z.tokens[pos - 1]
            for tok, tid in candidates:
                expansions.append(
                    (score + lm.log_prob(tok, prev), fills + (tok,), fill_ids + (tid,))
                )
        expansions.sort(key=lambda e: (-e[0], e[2]))
        beam = expansions[:beam_width]

    _, best_fills, best_ids = beam[0]
    tokens = list(z.tokens)
    ids = list(z.ids)
    for pos, tok, tid in zip(plan.positions, best_fills, best_ids):
        tokens[pos] = tok
        ids[pos] = tid
    return TokenSeq(tuple(tokens), tuple(ids))


DEFAULT_SYNONYMS: Mapping[str, str] = {
    "big": "large",
    "large": "big",
    "small": "little",
    "little": "small",
    "fast": "quick",
    "quick": "fast",
    "slow": "sluggish",
    "happy": "glad",
    "sad": "unhappy",
    "old": "ancient",
    "new": "fresh",
    "car": "automobile",
    "road": "street",
    "house": "home",
    "begins": "starts",
    "starts": "begins",
    "ends": "finishes",
    "said": "stated",
    "near": "close",
    "builds": "constructs",
}


class IdentityTranslator:
    """Round-trip stub that returns its input unchanged."""

    label = "identity-stub"

    def round_trip(self, tokens: Sequence[str], rng=None) -> list[str]:
        return list(tokens)


class StubBacktranslator:
    """Offline round-trip stand-in: synonym substitution plus a local shuffle.

    This is a labeled stub, not a translation model; real translators attach
    through the external line protocol.  Deterministic given the passed rng.
    """

    label = "stub"

    def __init__(
        self,
        synonyms: Mapping[str, str] | None = None,
        substitute_prob: float = 0.35,
        shuffle_prob: float = 0.25,
    ):
        self.synonyms = dict(DEFAULT_SYNONYMS if synonyms is None else synonyms)
        self.substitute_prob = substitute_prob
        self.shuffle_prob = shuffle_prob

    def round_trip(self, tokens: Sequence[str], rng=None) -> list[str]:
        rng = np.random.default_rng(0) if rng is None else rng
        out = []
        for tok in tokens:
            if tok in self.synonyms and rng.random() < self.substitute_prob:
                out.append(self.synonyms[tok])
            else:
                out.append(tok)
        if len(out) >= 2 and rng.random() < self.shuffle_prob:
            i = int(rng.integers(0, len(out) - 1))
            out[i], out[i + 1] = out[i + 1], out[i]
        return out


class ExternalRoundTripTranslator:
    """Round-trip translation over a child process: one sentence line in, one out."""

    label = "external"

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._transcript: list[str] = []

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def round_trip(self, tokens: Sequence[str], rng=None) -> list[str]:
        proc = self._ensure()
        request = " ".join(tokens).replace("\t", " ").replace("\n", " ")
        self._transcript.append(f"> {request}")
        try:
            proc.stdin.write(request + "\n")
            proc.stdin.flush()
            response = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ScorerProtocolError(f"translator pipe failed: {exc}", self._transcript) from exc
        if response == "":
            raise ScorerProtocolError("translator closed its output stream", self._transcript)
        self._transcript.append(f"< {response.rstrip()}")
        return response.rstrip("\n").split()

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


def backtranslate(z: TokenSeq, translator, vocab: Vocabulary, rng=None) -> TokenSeq:
    """Run one round trip and return the output verbatim as a TokenSeq."""
    tokens = translator.round_trip(z.tokens, rng)
    return TokenSeq.from_tokens(tokens, vocab)


def drop_words(z_tilde: TokenSeq, seed: int) -> TokenSeq:
    """Remove k ~ Uniform{0..len} positions chosen without replacement.

    Survivor order is preserved; the result may be empty.
    """
    rng = np.random.default_rng(seed)
    n = len(z_tilde)
    k = int(rng.integers(0, n + 1))
    if k == 0 or n == 0:
        return z_tilde
    dropped = set(int(p) for p in rng.choice(n, size=k, replace=False))
    keep = [i for i in range(n) if i not in dropped]
    return TokenSeq(
        tuple(z_tilde.tokens[i] for i in keep), tuple(z_tilde.ids[i] for i in keep)
    )


@dataclass(frozen=True)
class GenerationConfig:
    """Per-segment multiplicities and the word-drop rate."""

    n_scatter: int = 2
    n_contiguous: int = 1
    n_backtranslation: int = 1
    word_drop_rate: float = 0.3
    beam_width: int = 8

    def __post_init__(self):
        if min(self.n_scatter, self.n_contiguous, self.n_backtranslation) < 0:
            raise DataError("variant multiplicities must be >= 0")
        if not 0.0 <= self.word_drop_rate <= 1.0:
            raise DataError("word_drop_rate must lie in [0, 1]")
        if self.beam_width < 1:
            raise DataError("beam_width must be >= 1")


def generate_corpus(
    segments: Sequence[TokenSeq],
    config: GenerationConfig,
    lm,
    translator,
    vocab: Vocabulary,
    seed: int,
) -> list[SyntheticExample]:
    """Perturb each segment per the config, then append word-dropped copies.

    Base variants are emitted in segment order (scatter, contiguous, then
    backtranslation); afterwards each emitted example independently gets a
    word-dropped twin with probability ``word_drop_rate``, appended at the
    end.  All per-example seeds derive from the master seed, so the output is
    byte-identical across runs.
    """
    if not segments:
        raise DataError("generate_corpus requires at least one segment")
    master = np.random.default_rng(seed)

    def next_seed() -> int:
        return int(master.integers(0, 2**62))

    out: list[SyntheticExample] = []
    for z in segments:
        if len(z) == 0:
            continue
        for _ in range(config.n_scatter):
            s = next_seed()
            plan = plan_masks(z, "scatter", s)
            out.append(SyntheticExample(z, fill_masks(z, plan, lm, config.beam_width), Origin(MASK_SCATTER), s))
        for _ in range(config.n_contiguous):
            s = next_seed()
            plan = plan_masks(z, "contiguous", s)
            out.append(SyntheticExample(z, fill_masks(z, plan, lm, config.beam_width), Origin(MASK_CONTIGUOUS), s))
        for _ in range(config.n_backtranslation):
            s = next_seed()
            z_t = backtranslate(z, translator, vocab, np.random.default_rng(s))
            out.append(SyntheticExample(z, z_t, Origin(BACKTRANSLATION), s))

    dropped: list[SyntheticExample] = []
    for ex in out:
        if master.random() < config.word_drop_rate:
            s = next_seed()
            dropped.append(
                SyntheticExample(ex.z, drop_words(ex.z_tilde, s), Origin(WORD_DROP, ex.origin.kind), s)
            )
    return out + dropped


# ---------------------------------------------------------------------------
# Synthetic corpus file format: JSONL with one header record.
# ---------------------------------------------------------------------------

SYNTH_FORMAT = "synthetic-corpus"
SYNTH_VERSION = 1


def write_synthetic(
    examples: Sequence[SyntheticExample], path: str | Path, meta: Mapping[str, object] | None = None
) -> None:
    header = {"record": "header", "format": SYNTH_FORMAT, "version": SYNTH_VERSION}
    header.update(meta or {})
    lines = [json.dumps(header, sort_keys=True)]
    for ex in examples:
        lines.append(
            json.dumps(
                {
                    "z": list(ex.z.tokens),
                    "z_tilde": list(ex.z_tilde.tokens),
                    "origin": {"kind": ex.origin.kind, "parent": ex.origin.parent},
                    "seed": ex.seed,
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_synthetic(path: str | Path, vocab: Vocabulary) -> tuple[list[SyntheticExample], dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"empty synthetic corpus file {path}")
    header = json.loads(lines[0])
    if header.get("format") != SYNTH_FORMAT or header.get("version") != SYNTH_VERSION:
        from .errors import SchemaVersionError

        raise SchemaVersionError(
            f"{SYNTH_FORMAT}/{SYNTH_VERSION}",
            f"{header.get('format')}/{header.get('version')}",
        )
    examples = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        examples.append(
            SyntheticExample(
                z=TokenSeq.from_tokens(obj["z"], vocab),
                z_tilde=TokenSeq.from_tokens(obj["z_tilde"], vocab),
                origin=Origin(obj["origin"]["kind"], obj["origin"].get("parent")),
                seed=int(obj["seed"]),
            )
        )
    return examples, header
