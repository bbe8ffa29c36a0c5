"""The nine pre-training signal families attached to each synthetic pair.

Layout (version 1) is fixed: an 11-dim regression block
  bleu[1] | rouge P,R,F[3] | soft_overlap P,R,F[3] |
  bt_en_fr_ref[1] | bt_en_fr_cand[1] | bt_en_de_ref[1] | bt_en_de_cand[1]
followed by two classification blocks: entailment[3] and bt_flag[2].

Likelihood and entailment providers are pluggable; offline stubs keep all nine
signals computable without any external model.  External providers speak a
line protocol over a child process (see ExternalScorer).
"""

from __future__ import annotations

import json
import math
import subprocess
import threading
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, NumericError, PairscoreError, SchemaVersionError, ScorerProtocolError
from .metrics import EmbeddingTable, rouge_n, sentence_bleu, soft_overlap
from .synth import BACKTRANSLATION, SyntheticExample
from .text import TokenSeq, Vocabulary

SIGNAL_LAYOUT_VERSION = 1

REGRESSION = "regression"
CLASSIFICATION = "classification"


@dataclass(frozen=True)
class TaskSpec:
    """One pre-training task: its name, loss kind, output width, and weight."""

    name: str
    kind: str
    dim: int
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in (REGRESSION, CLASSIFICATION):
            raise DataError(f"unknown task kind {self.kind!r}")
        if self.dim < 1:
            raise DataError("task dim must be >= 1")
        if self.weight < 0 or not math.isfinite(self.weight):
            raise DataError("task weight must be finite and >= 0")

    def with_weight(self, weight: float) -> "TaskSpec":
        return TaskSpec(self.name, self.kind, self.dim, weight)


def default_task_specs() -> tuple[TaskSpec, ...]:
    return (
        TaskSpec("bleu", REGRESSION, 1),
        TaskSpec("rouge", REGRESSION, 3),
        TaskSpec("soft_overlap", REGRESSION, 3),
        TaskSpec("bt_en_fr_ref", REGRESSION, 1),
        TaskSpec("bt_en_fr_cand", REGRESSION, 1),
        TaskSpec("bt_en_de_ref", REGRESSION, 1),
        TaskSpec("bt_en_de_cand", REGRESSION, 1),
        TaskSpec("entailment", CLASSIFICATION, 3),
        TaskSpec("bt_flag", CLASSIFICATION, 2),
    )


TASK_NAMES = tuple(t.name for t in default_task_specs())
REGRESSION_TASKS = tuple(t for t in default_task_specs() if t.kind == REGRESSION)
CLASSIFICATION_TASKS = tuple(t for t in default_task_specs() if t.kind == CLASSIFICATION)

# Tasks sharing one grid-searched weight, in the conventional grouping:
# string metrics, translation likelihoods, semantic judgments.
WEIGHT_GROUPS: tuple[tuple[str, ...], ...] = (
    ("bleu", "rouge", "soft_overlap"),
    ("bt_en_fr_ref", "bt_en_fr_cand", "bt_en_de_ref", "bt_en_de_cand"),
    ("entailment", "bt_flag"),
)


def regression_dim_labels() -> tuple[str, ...]:
    labels = []
    for task in REGRESSION_TASKS:
        if task.dim == 1:
            labels.append(task.name)
        else:
            for part in ("precision", "recall", "fscore"):
                labels.append(f"{task.name}.{part}")
    return tuple(labels)


REGRESSION_DIM = sum(t.dim for t in REGRESSION_TASKS)  # 11


class SignalVector:
    """Per-task value blocks for one synthetic pair, validated on construction."""

    def __init__(self, values: Mapping[str, Sequence[float]], normalized: bool = False):
        blocks: dict[str, np.ndarray] = {}
        for task in default_task_specs():
            if task.name not in values:
                raise DataError(f"signal vector missing task {task.name!r}")
            arr = np.asarray(values[task.name], dtype=np.float64)
            if arr.shape != (task.dim,):
                raise DataError(f"task {task.name!r} expects {task.dim} values, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"task {task.name!r} has non-finite values")
            blocks[task.name] = arr
        extra = set(values) - set(TASK_NAMES)
        if extra:
            raise DataError(f"unknown signal tasks: {sorted(extra)}")

        entail = blocks["entailment"]
        if np.any(entail < 0) or np.any(entail > 1) or abs(entail.sum() - 1.0) > 1e-9:
            raise NumericError("entailment block must be a probability simplex point")
        flag = blocks["bt_flag"]
        if sorted(flag.tolist()) != [0.0, 1.0]:
            raise NumericError("bt_flag block must be exactly one-hot")

        self._blocks = blocks
        self.normalized = normalized

    def __getitem__(self, task_name: str) -> np.ndarray:
        return self._blocks[task_name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignalVector):
            return NotImplemented
        return self.normalized == other.normalized and all(
            np.array_equal(self._blocks[k], other._blocks[k]) for k in TASK_NAMES
        )

    def regression_concat(self) -> np.ndarray:
        return np.concatenate([self._blocks[t.name] for t in REGRESSION_TASKS])

    def replace_regression(self, flat: np.ndarray, normalized: bool) -> "SignalVector":
        values = {t.name: self._blocks[t.name] for t in CLASSIFICATION_TASKS}
        offset = 0
        for task in REGRESSION_TASKS:
            values[task.name] = flat[offset : offset + task.dim]
            offset += task.dim
        return SignalVector(values, normalized=normalized)

    def to_json_dict(self) -> dict:
        return {name: [float(x) for x in self._blocks[name]] for name in TASK_NAMES}

    @classmethod
    def from_json_dict(cls, payload: Mapping[str, Sequence[float]], normalized: bool = False) -> "SignalVector":
        return cls(payload, normalized=normalized)


# ---------------------------------------------------------------------------
# Likelihood and entailment providers.
# ---------------------------------------------------------------------------

DIRECTIONS = ("en-fr", "en-de")


def backtrans_likelihood(target: TokenSeq, conditioning: TokenSeq, scorer, direction: str) -> float:
    """Length-normalized round-trip log-likelihood: log P(target | conditioning) / |target|.

    The scorer owns the pivot-language approximation; this op only divides by
    the target token count, which is why an empty target is an error.
    """
    if len(target) == 0:
        raise NumericError("backtrans_likelihood: empty target sentence (length normalization)")
    value = float(scorer.log_prob(direction, target, conditioning))
    if not math.isfinite(value):
        raise NumericError(f"scorer returned non-finite log-probability {value!r}")
    return value / len(target)


class UnigramScorer:
    """Offline likelihood stub: token-level unigram log-likelihood of the target.

    The conditioning sentence is ignored; each direction uses its own add-k
    constant so the four likelihood dimensions are distinct but reproducible.
    Not a translation model.
    """

    label = "stub"

    def __init__(self, counts: Counter, total: int, direction_k: Mapping[str, float] | None = None):
        self._counts = counts
        self._total = total
        self._types = len(counts) + 1  # one extra type for unseen tokens
        self._direction_k = dict(direction_k or {"en-fr": 0.2, "en-de": 0.4})

    @classmethod
    def train(cls, segments: Iterable[Sequence[str]], direction_k: Mapping[str, float] | None = None):
        counts: Counter = Counter()
        total = 0
        for seg in segments:
            toks = seg.tokens if isinstance(seg, TokenSeq) else seg
            counts.update(toks)
            total += len(toks)
        return cls(counts, total, direction_k)

    def token_log_prob(self, token: str, direction: str) -> float:
        k = self._direction_k[direction]
        return math.log((self._counts[token] + k) / (self._total + k * self._types))

    def log_prob(self, direction: str, target: TokenSeq, conditioning: TokenSeq) -> float:
        if direction not in self._direction_k:
            raise DataError(f"unknown direction {direction!r}")
        return sum(self.token_log_prob(tok, direction) for tok in target.tokens)


DEFAULT_ANTONYMS: Mapping[str, tuple[str, ...]] = {
    "big": ("small", "little"),
    "small": ("big", "large"),
    "large": ("small", "little"),
    "little": ("big", "large"),
    "fast": ("slow",),
    "quick": ("slow",),
    "slow": ("fast", "quick"),
    "old": ("new", "young"),
    "new": ("old",),
    "young": ("old",),
    "happy": ("sad",),
    "sad": ("happy",),
    "hot": ("cold",),
    "cold": ("hot",),
    "near": ("far",),
    "far": ("near",),
    "begins": ("ends",),
    "ends": ("begins",),
    "open": ("closed",),
    "closed": ("open",),
}


class BaselineEntailment:
    """Token-containment baseline for the 3-way entailment signal.

    Entail mass follows the fraction of candidate tokens present in the
    source; Contradict follows antonym-table hits; Neutral takes the rest.
    Labeled baseline: not equivalent to a trained entailment classifier.
    """

    label = "baseline"

    def __init__(self, antonyms: Mapping[str, tuple[str, ...]] | None = None):
        self.antonyms = dict(DEFAULT_ANTONYMS if antonyms is None else antonyms)

    def probs(self, z: TokenSeq, z_tilde: TokenSeq) -> tuple[float, float, float]:
        cand_types = set(z_tilde.tokens)
        src_types = set(z.tokens)
        if not cand_types:
            return (0.0, 0.0, 1.0)
        containment = len(cand_types & src_types) / len(cand_types)
        hits = sum(
            1 for tok in cand_types if any(a in src_types for a in self.antonyms.get(tok, ()))
        )
        antonym_rate = hits / len(cand_types)
        entail = containment * (1.0 - antonym_rate)
        contradict = antonym_rate
        neutral = max(0.0, 1.0 - entail - contradict)
        total = entail + contradict + neutral
        return (entail / total, contradict / total, neutral / total)


def entailment_probs(z: TokenSeq, z_tilde: TokenSeq, provider) -> np.ndarray:
    """Validated (Entail, Contradict, Neutral) probabilities from a provider."""
    raw = np.asarray(provider.probs(z, z_tilde), dtype=np.float64)
    if raw.shape != (3,):
        raise NumericError(f"entailment provider returned shape {raw.shape}, want (3,)")
    if np.any(raw < 0):
        raise NumericError(f"entailment provider returned negative probability: {raw.tolist()}")
    total = float(raw.sum())
    if abs(total - 1.0) > 1e-6:
        raise NumericError(f"entailment probabilities sum to {total}, beyond tolerance 1e-6")
    return raw / total


# ---------------------------------------------------------------------------
# External scorer protocol: line-delimited requests over a child process.
# Request line:  task <TAB> direction <TAB> z <TAB> z_tilde
# Response line: space-separated reals (one line per request, flushed).
# Tasks: "likelihood" (z = conditioning, z_tilde = scored sentence; 1 real)
# and "entailment" (3 reals).  Direction is "-" when not applicable.
# ---------------------------------------------------------------------------


class ExternalScorer:
    """Owns one scorer child process; one in-flight request at a time."""

    def __init__(self, command: Sequence[str]):
        self.command = list(command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()
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

    def request(self, task: str, direction: str, z_text: str, zt_text: str) -> list[float]:
        clean = [
            field.replace("\t", " ").replace("\n", " ")
            for field in (task, direction, z_text, zt_text)
        ]
        line = "\t".join(clean)
        with self._lock:
            proc = self._ensure()
            self._transcript.append(f"> {line}")
            try:
                proc.stdin.write(line + "\n")
                proc.stdin.flush()
                response = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise ScorerProtocolError(f"scorer pipe failed: {exc}", self._transcript) from exc
            if response == "":
                raise ScorerProtocolError("scorer closed its output stream", self._transcript)
            self._transcript.append(f"< {response.rstrip()}")
        try:
            return [float(x) for x in response.split()]
        except ValueError as exc:
            raise ScorerProtocolError(
                f"scorer response is not space-separated reals: {response!r}", self._transcript
            ) from exc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)


class ExternalLikelihoodScorer:
    """Adapter giving an ExternalScorer the likelihood-provider interface."""

    label = "external"

    def __init__(self, scorer: ExternalScorer):
        self._scorer = scorer

    def log_prob(self, direction: str, target: TokenSeq, conditioning: TokenSeq) -> float:
        values = self._scorer.request(
            "likelihood", direction, conditioning.detokenize(), target.detokenize()
        )
        if len(values) != 1:
            raise ScorerProtocolError(f"likelihood response must be 1 real, got {len(values)}")
        return values[0]


class ExternalEntailment:
    """Adapter giving an ExternalScorer the entailment-provider interface."""

    label = "external"

    def __init__(self, scorer: ExternalScorer):
        self._scorer = scorer

    def probs(self, z: TokenSeq, z_tilde: TokenSeq) -> tuple[float, ...]:
        values = self._scorer.request("entailment", "-", z.detokenize(), z_tilde.detokenize())
        if len(values) != 3:
            raise ScorerProtocolError(f"entailment response must be 3 reals, got {len(values)}")
        return tuple(values)


# ---------------------------------------------------------------------------
# Signal assembly.
# ---------------------------------------------------------------------------


@dataclass
class SignalProviders:
    embeddings: EmbeddingTable
    likelihood: object
    entailment: object


class SignalError(PairscoreError):
    """A provider failed while computing one task; names the task."""


def compute_signals(example: SyntheticExample, providers: SignalProviders) -> SignalVector:
    """Fill all nine task blocks for one synthetic pair.

    Provider failures are re-raised with the task name attached.  The flag
    block is (1, 0) exactly when the origin, unwrapping word drops, is
    backtranslation.
    """
    z, z_t = example.z, example.z_tilde
    values: dict[str, Sequence[float]] = {}

    def run(task_name: str, fn):
        try:
            values[task_name] = fn()
        except PairscoreError as exc:
            raise SignalError(f"task {task_name!r}: {exc}") from exc

    run("bleu", lambda: [sentence_bleu(z, z_t)])
    run("rouge", lambda: rouge_n(z, z_t, 1).as_tuple())
    run("soft_overlap", lambda: soft_overlap(z, z_t, providers.embeddings).as_tuple())
    run("bt_en_fr_ref", lambda: [backtrans_likelihood(z, z_t, providers.likelihood, "en-fr")])
    run("bt_en_fr_cand", lambda: [backtrans_likelihood(z_t, z, providers.likelihood, "en-fr")])
    run("bt_en_de_ref", lambda: [backtrans_likelihood(z, z_t, providers.likelihood, "en-de")])
    run("bt_en_de_cand", lambda: [backtrans_likelihood(z_t, z, providers.likelihood, "en-de")])
    run("entailment", lambda: entailment_probs(z, z_t, providers.entailment).tolist())
    is_bt = example.origin.base_kind() == BACKTRANSLATION
    values["bt_flag"] = [1.0, 0.0] if is_bt else [0.0, 1.0]
    return SignalVector(values)


def compute_signals_corpus(
    examples: Sequence[SyntheticExample],
    providers: SignalProviders,
    jobs: int = 1,
    skip_failures: bool = False,
) -> tuple[list[tuple[SyntheticExample, SignalVector]], list[str]]:
    """Compute signals for many examples, preserving input order.

    With skip_failures, per-example SignalErrors (e.g. an empty candidate
    after a full word drop) are collected instead of raised.
    """

    def one(ex):
        try:
            return compute_signals(ex, providers), None
        except SignalError as exc:
            if skip_failures:
                return None, str(exc)
            raise

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, examples))
    else:
        results = [one(ex) for ex in examples]

    out, problems = [], []
    for ex, (vec, problem) in zip(examples, results):
        if vec is not None:
            out.append((ex, vec))
        else:
            problems.append(problem)
    return out, problems


# ---------------------------------------------------------------------------
# Label normalization over a corpus of signal vectors.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalizationStats:
    labels: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "mean": [float(x) for x in self.mean],
            "std": [float(x) for x in self.std],
        }

    @classmethod
    def from_json_dict(cls, payload: Mapping) -> "NormalizationStats":
        return cls(
            labels=tuple(payload["labels"]),
            mean=np.asarray(payload["mean"], dtype=np.float64),
            std=np.asarray(payload["std"], dtype=np.float64),
        )


def fit_normalization(vectors: Sequence[SignalVector]) -> NormalizationStats:
    """Mean/std per regression dimension over the corpus (population std)."""
    if len(vectors) < 2:
        raise DataError("normalization needs at least 2 signal vectors")
    matrix = np.stack([v.regression_concat() for v in vectors])
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    labels = regression_dim_labels()
    for i, s in enumerate(std):
        if s == 0.0:
            raise NumericError(f"zero-variance regression dimension {labels[i]!r}")
    return NormalizationStats(labels=labels, mean=mean, std=std)


def apply_normalization(vector: SignalVector, stats: NormalizationStats) -> SignalVector:
    """Standardize the regression block; classification blocks pass through."""
    flat = (vector.regression_concat() - stats.mean) / stats.std
    return vector.replace_regression(flat, normalized=True)


# ---------------------------------------------------------------------------
# Signal corpus file: JSONL with normalization stats in the header record.
# ---------------------------------------------------------------------------

SIGNALS_FORMAT = "signal-corpus"
SIGNALS_VERSION = 1


def write_signals(
    pairs: Sequence[tuple[SyntheticExample, SignalVector]],
    path: str | Path,
    stats: NormalizationStats | None,
    meta: Mapping[str, object] | None = None,
) -> None:
    header = {
        "record": "header",
        "format": SIGNALS_FORMAT,
        "version": SIGNALS_VERSION,
        "layout_version": SIGNAL_LAYOUT_VERSION,
        "normalization": stats.to_json_dict() if stats is not None else None,
    }
    header.update(meta or {})
    lines = [json.dumps(header, sort_keys=True)]
    for ex, vec in pairs:
        lines.append(
            json.dumps(
                {
                    "z": list(ex.z.tokens),
                    "z_tilde": list(ex.z_tilde.tokens),
                    "origin": {"kind": ex.origin.kind, "parent": ex.origin.parent},
                    "seed": ex.seed,
                    "normalized": vec.normalized,
                    "signals": vec.to_json_dict(),
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_signals(
    path: str | Path, vocab: Vocabulary
) -> tuple[list[tuple[SyntheticExample, SignalVector]], NormalizationStats | None, dict]:
    from .synth import Origin

    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"empty signals file {path}")
    header = json.loads(lines[0])
    if header.get("format") != SIGNALS_FORMAT or header.get("version") != SIGNALS_VERSION:
        raise SchemaVersionError(
            f"{SIGNALS_FORMAT}/{SIGNALS_VERSION}",
            f"{header.get('format')}/{header.get('version')}",
        )
    stats = None
    if header.get("normalization"):
        stats = NormalizationStats.from_json_dict(header["normalization"])
    pairs = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        ex = SyntheticExample(
            z=TokenSeq.from_tokens(obj["z"], vocab),
            z_tilde=TokenSeq.from_tokens(obj["z_tilde"], vocab),
            origin=Origin(obj["origin"]["kind"], obj["origin"].get("parent")),
            seed=int(obj["seed"]),
        )
        vec = SignalVector.from_json_dict(obj["signals"], normalized=bool(obj.get("normalized")))
        pairs.append((ex, vec))
    return pairs, stats, header
