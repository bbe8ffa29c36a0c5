"""Experiment harnesses: per-task ablations and the quality-drift study.

The ablation runner retrains the metric with individual pre-training tasks
switched on or off and reports the Kendall delta against a no-pre-training
baseline, sharing seeds across rows so dead configurations reproduce the
baseline exactly.  The drift study fine-tunes on left-skewed ratings and
evaluates on right-skewed ones across a range of skew factors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .encoder import EncoderConfig, ModelParams, init_model
from .errors import DataError
from .metrics import EmbeddingTable
from .signals import (
    BaselineEntailment,
    SignalProviders,
    SignalVector,
    TaskSpec,
    UnigramScorer,
    apply_normalization,
    compute_signals_corpus,
    default_task_specs,
    fit_normalization,
)
from .stats import SkewConfig, kendall_pairwise, skew_split
from .synth import (
    BigramLM,
    GenerationConfig,
    StubBacktranslator,
    SyntheticExample,
    generate_corpus,
)
from .text import RatedExample, SentencePair, TokenSeq, Vocabulary, split_no_leak, tokenize
from .training import TrainConfig, finetune, predict_ratings, pretrain


# ---------------------------------------------------------------------------
# Ablations over the pre-training task set.
# ---------------------------------------------------------------------------


@dataclass
class AblationPipeline:
    """Everything an ablation row needs to train and score one configuration."""

    vocab: Vocabulary
    encoder_config: EncoderConfig
    base_tasks: tuple[TaskSpec, ...]
    synthetic: Sequence[tuple[SyntheticExample, SignalVector]]
    train: Sequence[RatedExample]
    validation: Sequence[RatedExample]
    test: Sequence[RatedExample]
    pretrain_config: TrainConfig
    finetune_config: TrainConfig


@dataclass
class AblationRow:
    name: str
    mode: str
    active: tuple[str, ...]
    tau: float | None
    delta: float | None
    error: str | None = None


def _test_kendall(params: ModelParams, pipeline: AblationPipeline) -> float:
    preds = predict_ratings(params, pipeline.test, pipeline.vocab)
    human = [ex.rating for ex in pipeline.test]
    return kendall_pairwise(human, list(preds), [0] * len(human))


def run_ablation(pipeline: AblationPipeline, mode: str) -> list[AblationRow]:
    """One row per pre-training task, plus the delta vs no pre-training.

    single-task: only the named task keeps its base weight.  leave-one-out:
    the named task's weight is zeroed, all others keep theirs.  Rows share
    the same seeds and initial parameters, so a row whose pre-training has no
    active weight reports a delta of exactly zero.  Failures are recorded per
    row and do not stop the run.
    """
    if mode not in ("single-task", "leave-one-out"):
        raise DataError(f"unknown ablation mode {mode!r}")
    init = init_model(pipeline.encoder_config, pipeline.base_tasks)
    baseline_params, _ = finetune(
        init, pipeline.train, pipeline.validation, pipeline.finetune_config, pipeline.vocab
    )
    baseline_tau = _test_kendall(baseline_params, pipeline)

    rows: list[AblationRow] = []
    for focus in pipeline.base_tasks:
        if mode == "single-task":
            tasks = tuple(
                t.with_weight(t.weight if t.name == focus.name else 0.0)
                for t in pipeline.base_tasks
            )
        else:
            tasks = tuple(
                t.with_weight(0.0 if t.name == focus.name else t.weight)
                for t in pipeline.base_tasks
            )
        active = tuple(t.name for t in tasks if t.weight != 0.0)
        try:
            pretrained, _ = pretrain(
                init, pipeline.synthetic, tasks, pipeline.pretrain_config, pipeline.vocab
            )
            tuned, _ = finetune(
                pretrained, pipeline.train, pipeline.validation, pipeline.finetune_config,
                pipeline.vocab,
            )
            tau = _test_kendall(tuned, pipeline)
            rows.append(AblationRow(focus.name, mode, active, tau, tau - baseline_tau))
        except Exception as exc:  # keep remaining rows running
            rows.append(AblationRow(focus.name, mode, active, None, None, error=str(exc)))
    return rows


def ablation_to_csv(rows: Sequence[AblationRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task", "mode", "active_tasks", "kendall", "delta_vs_no_pretraining", "error"])
        for row in rows:
            writer.writerow(
                [
                    row.name,
                    row.mode,
                    " ".join(row.active),
                    "" if row.tau is None else repr(row.tau),
                    "" if row.delta is None else repr(row.delta),
                    row.error or "",
                ]
            )


# ---------------------------------------------------------------------------
# Drift task: ratings as a noisy monotone function of edit similarity.
# ---------------------------------------------------------------------------


def edit_similarity(a: Sequence[str], b: Sequence[str]) -> float:
    """1 - levenshtein(a, b) / max(|a|, |b|) over tokens."""
    a, b = list(a), list(b)
    if not a and not b:
        return 1.0
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
        prev = cur
    return 1.0 - prev[-1] / max(len(a), len(b))


def _one_perturbation(seq: TokenSeq, rng, lm, translator, vocab: Vocabulary) -> TokenSeq:
    from .synth import backtranslate, drop_words, fill_masks, plan_masks

    roll = rng.random()
    if roll < 0.45 and len(seq) > 0:
        strategy = "scatter" if rng.random() < 0.6 else "contiguous"
        plan = plan_masks(seq, strategy, int(rng.integers(0, 2**31)))
        return fill_masks(seq, plan, lm, beam_width=4)
    if roll < 0.75:
        dropped = drop_words(seq, int(rng.integers(0, 2**31)))
        return dropped if len(dropped) > 0 else TokenSeq(seq.tokens[:1], seq.ids[:1])
    return backtranslate(seq, translator, vocab, rng)


def build_drift_dataset(
    segments: Sequence[str],
    vocab: Vocabulary,
    n_records: int,
    seed: int,
    noise_sd: float = 4.0,
    lm=None,
    translator=None,
) -> list[RatedExample]:
    """Rated pairs whose rating is edit similarity (0-100) plus Gaussian noise.

    Candidates come from the same perturbation families as the synthetic
    pre-training pairs (mask filling, word dropping, the backtranslation
    stub), applied one to three times for a wide quality spread, plus a few
    verbatim copies and a few cross-segment mismatches near zero similarity.
    """
    rng = np.random.default_rng(seed)
    token_lists = [tokenize(s, vocab) for s in segments]
    token_lists = [t for t in token_lists if len(t) > 0]
    if lm is None:
        lm = BigramLM.train(token_lists, vocab)
    if translator is None:
        translator = StubBacktranslator()
    out = []
    for i in range(n_records):
        ref = token_lists[int(rng.integers(0, len(token_lists)))]
        roll = rng.random()
        if roll < 0.05:
            cand = ref
        elif roll < 0.10:
            other = token_lists[int(rng.integers(0, len(token_lists)))]
            cand = _one_perturbation(other, rng, lm, translator, vocab)
        else:
            cand = ref
            for _ in range(1 + int(rng.integers(0, 3))):
                cand = _one_perturbation(cand, rng, lm, translator, vocab)
        sim = edit_similarity(ref.tokens, cand.tokens)
        rating = float(np.clip(100.0 * sim + rng.normal(0.0, noise_sd), 0.0, 100.0))
        out.append(RatedExample(SentencePair(ref, cand), rating, f"drift{i:05d}"))
    return out


# ---------------------------------------------------------------------------
# Offline pre-training assets and the drift study itself.
# ---------------------------------------------------------------------------


def build_offline_pretraining_data(
    segments: Sequence[str],
    vocab: Vocabulary,
    gen_config: GenerationConfig,
    seed: int,
    jobs: int = 1,
) -> list[tuple[SyntheticExample, SignalVector]]:
    """Synthetic corpus + normalized signals using only the built-in providers."""
    token_lists = [tokenize(s, vocab) for s in segments]
    token_lists = [t for t in token_lists if len(t) > 0]
    lm = BigramLM.train(token_lists, vocab)
    translator = StubBacktranslator()
    examples = generate_corpus(token_lists, gen_config, lm, translator, vocab, seed)
    providers = SignalProviders(
        embeddings=EmbeddingTable.hashed((tok for seq in token_lists for tok in seq.tokens)),
        likelihood=UnigramScorer.train(token_lists),
        entailment=BaselineEntailment(),
    )
    pairs, _ = compute_signals_corpus(examples, providers, jobs=jobs, skip_failures=True)
    stats = fit_normalization([vec for _, vec in pairs])
    return [(ex, apply_normalization(vec, stats)) for ex, vec in pairs]


@dataclass
class DriftStudyConfig:
    """Pinned configuration for the drift study; defaults reproduce the headline run.

    Pre-training uses a healthy step budget at a larger rate; fine-tuning is
    deliberately gentle (small rate, few steps) so the comparison isolates
    what the starting parameters contribute, mirroring the warm-start recipe.
    """

    alphas: tuple[float, ...] = (0.0, 0.5, 1.0, 1.5)
    n_seeds: int = 5
    corpus_size: int = 400
    max_segment_tokens: int = 14
    n_records: int = 1400
    noise_sd: float = 3.0
    holdout_fraction: float = 0.2
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 64
    max_seq_len: int = 34
    pretrain_steps: int = 3000
    pretrain_eval_every: int = 750
    pretrain_learning_rate: float = 2e-3
    finetune_steps: int = 400
    finetune_eval_every: int = 100
    finetune_learning_rate: float = 3e-4
    batch_size: int = 32
    data_seed: int = 101


@dataclass
class DriftStudyResult:
    alphas: tuple[float, ...]
    taus: dict[str, dict[float, list[float]]]  # arm -> alpha -> per-seed taus

    def median(self, arm: str, alpha: float) -> float:
        return float(np.median(self.taus[arm][alpha]))

    def to_json_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "taus": {
                arm: {str(a): values for a, values in by_alpha.items()}
                for arm, by_alpha in self.taus.items()
            },
        }


def run_drift_study(
    config: DriftStudyConfig,
    segments: Sequence[str] | None = None,
    progress: Callable[[str], None] | None = None,
) -> DriftStudyResult:
    """Fine-tune with and without pre-training across train/test skew levels.

    For each skew factor the ratings are resampled into a low-rated training
    side and a high-rated test side (disjoint), the model is fine-tuned on
    the training side, and Kendall is measured on the test side.  Both arms
    share splits, seeds, and hyperparameters; only the starting parameters
    differ.
    """
    from .demo import demo_sentences

    say = progress or (lambda _msg: None)
    if segments is None:
        pool = demo_sentences(4 * config.corpus_size, seed=config.data_seed)
        segments = [s for s in pool if len(s.split()) <= config.max_segment_tokens]
        segments = segments[: config.corpus_size]
    token_lists = [s.split() for s in segments]
    vocab = Vocabulary.build(token_lists, min_count=1)

    say("building synthetic pre-training data")
    synthetic = build_offline_pretraining_data(
        segments, vocab, GenerationConfig(n_scatter=2, n_contiguous=1, n_backtranslation=1),
        seed=config.data_seed,
    )
    encoder_config = EncoderConfig(
        vocab_size=len(vocab),
        d_model=config.d_model,
        n_layers=config.n_layers,
        n_heads=config.n_heads,
        d_ff=config.d_ff,
        max_seq_len=config.max_seq_len,
        init_seed=config.data_seed,
    )
    init = init_model(encoder_config)
    pre_cfg = TrainConfig(
        total_steps=config.pretrain_steps,
        eval_every=config.pretrain_eval_every,
        batch_size=config.batch_size,
        learning_rate=config.pretrain_learning_rate,
        seed=0,
        stage="pretrain",
    )
    say(f"pre-training {config.pretrain_steps} steps")
    pretrained, _ = pretrain(init, synthetic, default_task_specs(), pre_cfg, vocab)

    dataset = build_drift_dataset(
        segments, vocab, config.n_records, seed=config.data_seed + 1, noise_sd=config.noise_sd
    )
    taus: dict[str, dict[float, list[float]]] = {
        "pretrained": {a: [] for a in config.alphas},
        "scratch": {a: [] for a in config.alphas},
    }
    for alpha in config.alphas:
        for seed in range(config.n_seeds):
            skew = SkewConfig(alpha, alpha, seed=1000 + seed, disjoint=True)
            train_side, test_side = skew_split(dataset, skew)
            train, validation = split_no_leak(train_side, config.holdout_fraction, seed=seed)
            ft_cfg = TrainConfig(
                total_steps=config.finetune_steps,
                eval_every=config.finetune_eval_every,
                batch_size=config.batch_size,
                learning_rate=config.finetune_learning_rate,
                seed=seed,
                stage="finetune",
            )
            for arm, start in (("pretrained", pretrained), ("scratch", init)):
                tuned, _ = finetune(start, train, validation, ft_cfg, vocab)
                preds = predict_ratings(tuned, test_side, vocab)
                tau = kendall_pairwise(
                    [ex.rating for ex in test_side], list(preds), [0] * len(test_side)
                )
                taus[arm][alpha].append(tau)
                say(f"alpha={alpha} seed={seed} {arm}: tau={tau:+.4f}")
    return DriftStudyResult(alphas=tuple(config.alphas), taus=taus)
