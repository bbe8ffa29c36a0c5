"""Pipeline orchestration CLI.

Every command is a pure function of (input files, flat config, seed): reruns
produce byte-identical artifacts, every artifact embeds the resolved config
hash, and inputs are never mutated.  Exit codes: 0 success, 2 usage, 3 data
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Callable, Mapping, Sequence

from . import __version__
from .demo import load_demo_corpus
from .encoder import EncoderConfig, init_model, load_checkpoint, save_checkpoint
from .errors import DataError, NumericError, PairscoreError, UsageError
from .experiments import AblationPipeline, ablation_to_csv, run_ablation
from .metrics import BLEU_SMOOTHING, EmbeddingTable
from .signals import (
    BaselineEntailment,
    ExternalEntailment,
    ExternalLikelihoodScorer,
    ExternalScorer,
    SignalProviders,
    UnigramScorer,
    apply_normalization,
    compute_signals_corpus,
    fit_normalization,
    read_signals,
    write_signals,
)
from .stats import SkewConfig, darr, save_report, skew_split
from .synth import (
    BigramLM,
    ExternalRoundTripTranslator,
    GenerationConfig,
    StubBacktranslator,
    generate_corpus,
    read_synthetic,
    write_synthetic,
)
from .text import (
    TOKENIZER_VERSION,
    RatedExample,
    SentencePair,
    Vocabulary,
    ingest_ratings,
    read_rating_records,
    serialize_ratings,
    split_no_leak,
    tokenize,
)
from .training import (
    TrainConfig,
    finetune,
    params_digest,
    predict_ratings,
    pretrain,
    save_manifest,
    set_task_weights,
)

# ---------------------------------------------------------------------------
# Flat key=value config with typed defaults, unknown keys rejected.
# ---------------------------------------------------------------------------

DEFAULTS: dict[str, object] = {
    "seed": 42,
    # vocabulary
    "vocab_min_count": 2,
    "vocab_size_cap": 8000,
    # encoder
    "d_model": 64,
    "n_layers": 2,
    "n_heads": 4,
    "d_ff": 256,
    "max_seq_len": 128,
    "dropout": 0.0,
    # synthetic generation
    "n_scatter": 2,
    "n_contiguous": 1,
    "n_backtranslation": 1,
    "word_drop_rate": 0.3,
    "beam_width": 8,
    "lm_add_k": 0.1,
    "lm_interpolation": 0.7,
    # signal providers
    "embedding_dim": 32,
    "embedding_file": "",
    "scorer_command": "",
    "entailment_command": "",
    "translator_command": "",
    # task weights (one per conventional group)
    "gamma_metrics": 1.0,
    "gamma_likelihood": 1.0,
    "gamma_semantic": 1.0,
    # training
    "batch_size": 32,
    "pretrain_steps": 2000,
    "finetune_steps": 500,
    "eval_every": 50,
    "pretrain_learning_rate": 1e-5,
    "finetune_learning_rate": 1e-5,
    "adam_beta1": 0.9,
    "adam_beta2": 0.999,
    "adam_eps": 1e-8,
    "holdout_fraction": 0.1,
    # evaluation
    "darr_threshold": 25.0,
    "eval_grouping": "source",  # "source": pairs within one source segment; "all": every pair
    # skew resampling
    "alpha_train": 0.0,
    "alpha_test": 0.0,
    "n_bins": 10,
    "skew_disjoint": False,
}

SCORER_COMMAND_ENV = "PAIRSCORE_SCORER_COMMAND"


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise UsageError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise UsageError(f"config key {key!r}: expected a number, got {raw!r}") from exc
    return raw.strip().strip('"')


def load_config(path: str | None, overrides: Sequence[str]) -> dict:
    """Resolve defaults <- config file <- --set overrides; reject unknown keys."""
    config = dict(DEFAULTS)
    if path:
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise UsageError(f"{path}:{lineno}: expected `key = value`")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
            config[key] = _coerce(key, raw.strip())
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        config[key] = _coerce(key, raw)
    return config


def render_config(config: Mapping[str, object]) -> str:
    lines = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines)


def config_hash(config: Mapping[str, object]) -> str:
    return hashlib.sha256(render_config(config).encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Shared plumbing.
# ---------------------------------------------------------------------------


def _atomic_write(path: Path, writer: Callable[[Path], None]) -> None:
    """Write via a temp file + rename so failures leave no partial artifact."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    tmp = Path(tmp_name)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def _ratings_format(path: str, override: str | None) -> str:
    if override:
        return override
    return "jsonl" if str(path).endswith(".jsonl") else "wmt-tsv"


def _read_corpus(path: str) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines:
        raise DataError(f"corpus {path} has no non-empty lines")
    return lines


def _providers(config: Mapping, segments) -> SignalProviders:
    if config["embedding_file"]:
        embeddings = EmbeddingTable.from_file(config["embedding_file"])
    else:
        embeddings = EmbeddingTable.hashed(
            (tok for seg in segments for tok in seg.tokens), dim=config["embedding_dim"]
        )
    scorer_command = os.environ.get(SCORER_COMMAND_ENV, "") or config["scorer_command"]
    if scorer_command:
        proc = ExternalScorer(scorer_command.split())
        likelihood = ExternalLikelihoodScorer(proc)
    else:
        likelihood = UnigramScorer.train(segments)
    if config["entailment_command"]:
        entailment = ExternalEntailment(ExternalScorer(config["entailment_command"].split()))
    else:
        entailment = BaselineEntailment()
    return SignalProviders(embeddings=embeddings, likelihood=likelihood, entailment=entailment)


def _train_config(config: Mapping, stage: str) -> TrainConfig:
    steps = config["pretrain_steps"] if stage == "pretrain" else config["finetune_steps"]
    lr = config["pretrain_learning_rate"] if stage == "pretrain" else config["finetune_learning_rate"]
    return TrainConfig(
        total_steps=steps,
        eval_every=min(config["eval_every"], steps) if steps else 1,
        batch_size=config["batch_size"],
        learning_rate=lr,
        beta1=config["adam_beta1"],
        beta2=config["adam_beta2"],
        adam_eps=config["adam_eps"],
        seed=config["seed"],
        stage=stage,
    )


def _task_weights(config: Mapping):
    return set_task_weights(
        [
            ("bleu", "rouge", "soft_overlap"),
            ("bt_en_fr_ref", "bt_en_fr_cand", "bt_en_de_ref", "bt_en_de_cand"),
            ("entailment", "bt_flag"),
        ],
        [config["gamma_metrics"], config["gamma_likelihood"], config["gamma_semantic"]],
    )


# ---------------------------------------------------------------------------
# Commands.
# ---------------------------------------------------------------------------


def cmd_gen_pairs(args, config) -> int:
    corpus = load_demo_corpus() if args.corpus == "demo" else _read_corpus(args.corpus)
    chash = config_hash(config)
    token_lists = [s.split() for s in corpus]
    vocab = Vocabulary.build(
        token_lists, min_count=config["vocab_min_count"], size_cap=config["vocab_size_cap"]
    )
    segments = [tokenize(s, vocab) for s in corpus]
    segments = [s for s in segments if len(s) > 0]
    lm = BigramLM.train(
        segments, vocab, add_k=config["lm_add_k"], interpolation=config["lm_interpolation"]
    )
    if config["translator_command"]:
        translator = ExternalRoundTripTranslator(config["translator_command"].split())
    else:
        translator = StubBacktranslator()
    gen_config = GenerationConfig(
        n_scatter=config["n_scatter"],
        n_contiguous=config["n_contiguous"],
        n_backtranslation=config["n_backtranslation"],
        word_drop_rate=config["word_drop_rate"],
        beam_width=config["beam_width"],
    )
    examples = generate_corpus(segments, gen_config, lm, translator, vocab, seed=config["seed"])
    meta = {"config_hash": chash, "tokenizer": TOKENIZER_VERSION, "translator": translator.label}
    _atomic_write(Path(args.out), lambda p: write_synthetic(examples, p, meta=meta))
    _atomic_write(Path(args.vocab_out), lambda p: vocab.save(p))
    counts: dict[str, int] = {}
    for ex in examples:
        key = ex.origin.kind if ex.origin.parent is None else f"{ex.origin.kind}({ex.origin.parent})"
        counts[key] = counts.get(key, 0) + 1
    print(f"config-hash: {chash}")
    print(f"wrote {len(examples)} synthetic pairs to {args.out}")
    for key in sorted(counts):
        print(f"  {key}: {counts[key]}")
    print(f"vocabulary: {len(vocab)} tokens -> {args.vocab_out}")
    return 0


def cmd_compute_signals(args, config) -> int:
    chash = config_hash(config)
    vocab = Vocabulary.load(args.vocab)
    examples, header = read_synthetic(args.pairs, vocab)
    if not examples:
        raise DataError(f"no synthetic examples in {args.pairs}")
    segments = [ex.z for ex in examples]
    providers = _providers(config, segments)
    pairs, problems = compute_signals_corpus(
        examples, providers, jobs=args.jobs, skip_failures=True
    )
    if not pairs:
        raise DataError("signal computation failed for every example")
    stats = fit_normalization([vec for _, vec in pairs])
    normalized = [(ex, apply_normalization(vec, stats)) for ex, vec in pairs]
    meta = {
        "config_hash": chash,
        "tokenizer": TOKENIZER_VERSION,
        "bleu_smoothing": BLEU_SMOOTHING,
        "skipped": len(problems),
        "source_pairs": header.get("config_hash"),
    }
    _atomic_write(Path(args.out), lambda p: write_signals(normalized, p, stats, meta=meta))
    print(f"config-hash: {chash}")
    print(f"wrote {len(normalized)} signal vectors to {args.out} (skipped {len(problems)})")
    return 0


def cmd_pretrain(args, config) -> int:
    chash = config_hash(config)
    vocab = Vocabulary.load(args.vocab)
    dataset, stats, header = read_signals(args.signals, vocab)
    if stats is None:
        raise DataError("signals file lacks normalization stats; run compute-signals first")
    tasks = _task_weights(config)
    enc = EncoderConfig(
        vocab_size=len(vocab),
        d_model=config["d_model"],
        n_layers=config["n_layers"],
        n_heads=config["n_heads"],
        d_ff=config["d_ff"],
        max_seq_len=config["max_seq_len"],
        dropout=config["dropout"],
        init_seed=config["seed"],
    )
    params = init_model(enc, tasks)
    train_config = _train_config(config, "pretrain")
    params, history = pretrain(params, dataset, tasks, train_config, vocab)
    meta = {"config_hash": chash, "vocab": list(vocab.tokens), "stage": "pretrain"}
    _atomic_write(Path(args.out), lambda p: save_checkpoint(params, p, meta=meta))
    if args.manifest:
        manifest = [
            {
                "stage": "pretrain",
                "kind": "pretrain",
                "steps": train_config.total_steps,
                "history": [{"step": h.step, "metric": h.metric} for h in history],
                "params_digest": params_digest(params),
                "checkpoint": str(args.out),
            }
        ]
        _atomic_write(
            Path(args.manifest), lambda p: save_manifest(manifest, p, meta={"config_hash": chash})
        )
    print(f"config-hash: {chash}")
    final = history[-1].metric if history else float("nan")
    print(f"pre-trained {train_config.total_steps} steps; final loss {final:.6f} -> {args.out}")
    return 0


def _load_params(path: str):
    params, meta = load_checkpoint(path)
    vocab_tokens = meta.get("vocab")
    if not vocab_tokens:
        raise DataError(f"checkpoint {path} lacks an embedded vocabulary")
    return params, Vocabulary(tuple(vocab_tokens)), meta


def cmd_finetune(args, config) -> int:
    chash = config_hash(config)
    params, vocab, _ = _load_params(args.checkpoint)
    result = ingest_ratings(args.ratings, _ratings_format(args.ratings, args.format), vocab)
    if not result.examples:
        raise DataError(f"no usable rated examples in {args.ratings}")
    train, validation = split_no_leak(
        result.examples, config["holdout_fraction"], seed=config["seed"]
    )
    train_config = _train_config(config, "finetune")
    params, history = finetune(params, train, validation, train_config, vocab)
    meta = {"config_hash": chash, "vocab": list(vocab.tokens), "stage": "finetune"}
    _atomic_write(Path(args.out), lambda p: save_checkpoint(params, p, meta=meta))
    if args.manifest:
        manifest = [
            {
                "stage": "finetune",
                "kind": "finetune",
                "steps": train_config.total_steps,
                "history": [{"step": h.step, "metric": h.metric} for h in history],
                "params_digest": params_digest(params),
                "checkpoint": str(args.out),
            }
        ]
        _atomic_write(
            Path(args.manifest), lambda p: save_manifest(manifest, p, meta={"config_hash": chash})
        )
    best = max((h.metric for h in history), default=float("nan"))
    print(f"config-hash: {chash}")
    print(
        f"fine-tuned {train_config.total_steps} steps on {len(train)} examples; "
        f"best validation kendall {best:.4f} -> {args.out}"
    )
    return 0


def cmd_predict(args, config) -> int:
    chash = config_hash(config)
    params, vocab, _ = _load_params(args.checkpoint)
    records, problems, _ = read_rating_records(
        args.input, _ratings_format(args.input, args.format), require_rating=False
    )
    if problems:
        raise DataError(f"{args.input}: {problems[0]} (+{len(problems) - 1} more)" if len(problems) > 1 else f"{args.input}: {problems[0]}")

    def scores() -> list[tuple[str, float]]:
        out = []
        for record in records:
            candidates = [
                RatedExample(
                    SentencePair(tokenize(ref, vocab), tokenize(record.candidate, vocab)),
                    0.0,
                    record.source_id,
                )
                for ref in record.references
            ]
            per_ref = predict_ratings(params, candidates, vocab)
            out.append((record.source_id, float(per_ref.max())))
        return out

    rows = scores()

    def write(p: Path):
        lines = [f"{source_id}\t{repr(score)}" for source_id, score in rows]
        p.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    _atomic_write(Path(args.out), write)
    print(f"config-hash: {chash}")
    print(f"predicted {len(rows)} records -> {args.out}")
    return 0


def cmd_evaluate(args, config) -> int:
    chash = config_hash(config)
    pred_lines = Path(args.predictions).read_text(encoding="utf-8").splitlines()
    predictions = []
    for lineno, line in enumerate(pred_lines, start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise DataError(f"{args.predictions}:{lineno}: expected `source_id<TAB>score`")
        predictions.append((cols[0], float(cols[1])))
    records, problems, _ = read_rating_records(
        args.ratings, _ratings_format(args.ratings, args.format), require_rating=True
    )
    if problems:
        raise DataError(f"{args.ratings}: {len(problems)} malformed records")
    if len(records) != len(predictions):
        raise DataError(
            f"record count mismatch: {len(predictions)} predictions vs {len(records)} rated records"
        )
    if config["eval_grouping"] not in ("source", "all"):
        raise UsageError(f"eval_grouping must be 'source' or 'all', got {config['eval_grouping']!r}")
    human, metric, groups = [], [], []
    for (source_id, score), record in zip(predictions, records):
        if source_id != record.source_id:
            raise DataError(f"source_id mismatch: {source_id!r} vs {record.source_id!r}")
        human.append(record.rating)
        metric.append(score)
        groups.append(record.source_id if config["eval_grouping"] == "source" else "all")
    report = darr(human, metric, groups, threshold=config["darr_threshold"])
    meta = {"config_hash": chash, "n_records": len(records)}
    _atomic_write(Path(args.out), lambda p: save_report(report, p, meta=meta))
    print(f"config-hash: {chash}")
    print(report.to_text_table())
    return 0


def cmd_skew_split(args, config) -> int:
    chash = config_hash(config)
    vocab = Vocabulary(("[pad]", "[unk]", "[cls]", "[sep]", "[mask]"))
    fmt = _ratings_format(args.ratings, args.format)
    result = ingest_ratings(args.ratings, fmt, vocab)
    if not result.examples:
        raise DataError(f"no usable rated examples in {args.ratings}")
    skew = SkewConfig(
        alpha_train=config["alpha_train"],
        alpha_test=config["alpha_test"],
        n_bins=config["n_bins"],
        seed=config["seed"],
        disjoint=config["skew_disjoint"],
    )
    train, test = skew_split(result.examples, skew)
    _atomic_write(Path(args.train_out), lambda p: serialize_ratings(train, p, fmt))
    _atomic_write(Path(args.test_out), lambda p: serialize_ratings(test, p, fmt))
    print(f"config-hash: {chash}")
    print(
        f"skew split alpha=({skew.alpha_train}, {skew.alpha_test}): "
        f"{len(train)} train, {len(test)} test of {len(result.examples)} records"
    )
    return 0


def cmd_ablate(args, config) -> int:
    chash = config_hash(config)
    vocab = Vocabulary.load(args.vocab)
    dataset, stats, _ = read_signals(args.signals, vocab)
    if stats is None:
        raise DataError("signals file lacks normalization stats")
    result = ingest_ratings(args.ratings, _ratings_format(args.ratings, args.format), vocab)
    if not result.examples:
        raise DataError(f"no usable rated examples in {args.ratings}")
    train_pool, test = split_no_leak(result.examples, 0.25, seed=config["seed"])
    train, validation = split_no_leak(train_pool, config["holdout_fraction"], seed=config["seed"])
    enc = EncoderConfig(
        vocab_size=len(vocab),
        d_model=config["d_model"],
        n_layers=config["n_layers"],
        n_heads=config["n_heads"],
        d_ff=config["d_ff"],
        max_seq_len=config["max_seq_len"],
        dropout=config["dropout"],
        init_seed=config["seed"],
    )
    pipeline = AblationPipeline(
        vocab=vocab,
        encoder_config=enc,
        base_tasks=_task_weights(config),
        synthetic=dataset,
        train=train,
        validation=validation,
        test=test,
        pretrain_config=_train_config(config, "pretrain"),
        finetune_config=_train_config(config, "finetune"),
    )
    rows = run_ablation(pipeline, args.mode)
    _atomic_write(Path(args.out), lambda p: ablation_to_csv(rows, p))
    print(f"config-hash: {chash}")
    for row in rows:
        if row.error:
            print(f"  {row.name}: ERROR {row.error}")
        else:
            print(f"  {row.name}: kendall {row.tau:+.4f} (delta {row.delta:+.4f})")
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairscore",
        description="Train and evaluate a learned reference-based text metric.",
    )
    parser.add_argument("--version", action="version", version=f"pairscore {__version__}")
    parser.add_argument("--dump-defaults", action="store_true", help="print default config and exit")
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--jobs", type=int, default=1, help="worker parallelism where supported")

    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-pairs", help="perturb a corpus into synthetic sentence pairs")
    p.add_argument("corpus", help="text file, one segment per line (or `demo`)")
    p.add_argument("out", help="output synthetic-pairs JSONL")
    p.add_argument("--vocab-out", default="vocab.json", help="where to write the vocabulary")
    p.set_defaults(func=cmd_gen_pairs)

    p = sub.add_parser("compute-signals", help="attach the nine training signals to each pair")
    p.add_argument("pairs", help="synthetic-pairs JSONL from gen-pairs")
    p.add_argument("vocab", help="vocabulary JSON from gen-pairs")
    p.add_argument("out", help="output signals JSONL")
    p.set_defaults(func=cmd_compute_signals)

    p = sub.add_parser("pretrain", help="multitask pre-training on signal vectors")
    p.add_argument("signals", help="signals JSONL from compute-signals")
    p.add_argument("vocab", help="vocabulary JSON")
    p.add_argument("out", help="output checkpoint")
    p.add_argument("--manifest", help="optional training manifest JSON")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint on human ratings")
    p.add_argument("checkpoint", help="input checkpoint")
    p.add_argument("ratings", help="ratings file (.tsv or .jsonl)")
    p.add_argument("out", help="output checkpoint")
    p.add_argument("--format", choices=["wmt-tsv", "jsonl"], help="override ratings format")
    p.add_argument("--manifest", help="optional training manifest JSON")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("predict", help="score (reference, candidate) records with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input", help="ratings-format file; rating column optional")
    p.add_argument("out", help="output TSV of source_id<TAB>score")
    p.add_argument("--format", choices=["wmt-tsv", "jsonl"])
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="agreement statistics for predictions vs human ratings")
    p.add_argument("predictions", help="TSV from predict")
    p.add_argument("ratings", help="ratings file with human scores")
    p.add_argument("out", help="output report JSON")
    p.add_argument("--format", choices=["wmt-tsv", "jsonl"])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("skew-split", help="drift resampling into skewed train/test sides")
    p.add_argument("ratings")
    p.add_argument("train_out")
    p.add_argument("test_out")
    p.add_argument("--format", choices=["wmt-tsv", "jsonl"])
    p.set_defaults(func=cmd_skew_split)

    p = sub.add_parser("ablate", help="single-task / leave-one-out pre-training ablations")
    p.add_argument("signals")
    p.add_argument("vocab")
    p.add_argument("ratings")
    p.add_argument("out", help="output CSV")
    p.add_argument("--mode", choices=["single-task", "leave-one-out"], default="single-task")
    p.add_argument("--format", choices=["wmt-tsv", "jsonl"])
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_defaults:
        print(render_config(DEFAULTS))
        return 0
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = load_config(args.config, args.set)
        return args.func(args, config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except PairscoreError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
