"""Command-line front end for the near-duplicate detection pipeline.

Subcommands chain through file artifacts in an output directory: train
embeddings, build a retrieval index, extract candidate pairs (mover or
tf-idf baseline), classify labeled pairs, and report method comparisons;
`synth-corpus` generates the planted-duplicate evaluation corpus. Settings
come from CLI flags, then a key=value config file, then defaults. Logs go
to stderr; artifacts are written atomically and are byte-identical for
identical inputs and seed."""

from __future__ import annotations

import argparse
import logging
import json
import os
import sys
from dataclasses import dataclass, fields
from datetime import date
from pathlib import Path
from typing import Callable

import numpy as np

from .classify import (
    FOREST,
    LOGISTIC,
    examples_from_pairs,
    loocv_grid_search,
    undersample,
)
from .corpus import Corpus, load_corpus, save_corpus, split_by_date
from .embed import EmbeddingTable, SgnsConfig, Vocab, load_vectors, save_vectors, train_sgns
from .mover import (
    COSINE,
    EUCLIDEAN,
    GramHistogram,
    MoverIndex,
    prepare_histogram,
    topk_query,
)
from .pipeline import (
    GRAM3,
    METHOD_TFIDF,
    ExtractionStats,
    build_instruction_docs,
    compare_methods,
    comparison_text,
    extract_candidates,
    extract_with_retriever,
    load_pairs,
    nbow_histograms,
    save_pairs,
    train_ingredient_table,
)
from .synth import CUTOFF, generate_corpus, save_truth
from .tokenize import WORD

logger = logging.getLogger(__name__)

GRAM3_NAME = GRAM3
WORD_NAME = WORD

_INT_FIELDS = {
    "k",
    "threshold",
    "seed",
    "dimension",
    "window",
    "negatives",
    "epochs",
    "min_count",
    "noise_table_size",
    "threads",
    "train_size",
    "planted",
    "fresh",
    "pool_size",
}
_FLOAT_FIELDS = {"subsample_threshold", "initial_step_size", "final_step_size", "typo_rate"}
_BOOL_FIELDS = {"baseline_words"}
_STR_FIELDS = {"corpus", "cutoff", "granularity", "embedding_source", "metric", "out"}
_ALL_FIELDS = _INT_FIELDS | _FLOAT_FIELDS | _BOOL_FIELDS | _STR_FIELDS


class ConfigError(Exception):
    """Invalid configuration; `field` names the offending setting."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingArtifact(Exception):
    """A required upstream artifact is absent; `producer` is the subcommand
    that writes it."""

    def __init__(self, path: Path, producer: str):
        super().__init__(f"missing artifact {path}; run `gram-mover {producer}` first")
        self.path = path
        self.producer = producer


@dataclass
class CliConfig:
    corpus: str | None = None
    cutoff: date = CUTOFF
    granularity: str = GRAM3_NAME
    embedding_source: str = "train-sgns"
    metric: str = COSINE
    k: int = 10
    threshold: int = 2
    seed: int = 1
    out: str = "out"
    threads: int = 1
    baseline_words: bool = False
    dimension: int = 100
    window: int = 15
    negatives: int = 5
    epochs: int = 5
    initial_step_size: float = 0.025
    final_step_size: float = 1e-4
    subsample_threshold: float = 1e-4
    min_count: int = 5
    noise_table_size: int = 10_000_000
    train_size: int = 940
    planted: int = 50
    fresh: int = 10
    pool_size: int = 200
    typo_rate: float = 0.02

    def sgns_config(self) -> SgnsConfig:
        return SgnsConfig(
            dimension=self.dimension,
            window=self.window,
            negatives=self.negatives,
            epochs=self.epochs,
            initial_step_size=self.initial_step_size,
            final_step_size=self.final_step_size,
            subsample_threshold=self.subsample_threshold,
            min_count=self.min_count,
            seed=self.seed,
            noise_table_size=self.noise_table_size,
        )

    def out_dir(self) -> Path:
        return Path(self.out)

    def method(self) -> str:
        suffix = "sgns" if self.embedding_source == "train-sgns" else "external"
        return f"{self.granularity}-{suffix}"


def read_config_file(path: str) -> dict[str, str]:
    """key=value lines; blank lines and #-comments are skipped."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError("config", f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _ALL_FIELDS:
                raise ConfigError(key, f"{path}:{line_no}: unknown setting")
            values[key] = value.strip()
    return values


def _coerce(field_name: str, raw: str):
    try:
        if field_name in _INT_FIELDS:
            return int(raw)
        if field_name in _FLOAT_FIELDS:
            return float(raw)
        if field_name in _BOOL_FIELDS:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError("expected a boolean")
        return raw
    except ValueError as error:
        raise ConfigError(field_name, f"cannot parse {raw!r}: {error}") from error


def resolve_config(args: argparse.Namespace) -> CliConfig:
    """CLI flag > config file > default, validated field by field."""
    config = CliConfig()
    file_values: dict[str, str] = {}
    if getattr(args, "config", None):
        if not Path(args.config).is_file():
            raise ConfigError("config", f"file not found: {args.config}")
        file_values = read_config_file(args.config)

    for name in _ALL_FIELDS:
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            setattr(config, name, cli_value)
        elif name in file_values:
            setattr(config, name, _coerce(name, file_values[name]))
    if getattr(args, "threads", None) is None and "threads" not in file_values:
        env = os.environ.get("GRAM_MOVER_THREADS")
        if env is not None:
            try:
                config.threads = int(env)
            except ValueError as error:
                raise ConfigError("threads", f"GRAM_MOVER_THREADS={env!r}: {error}") from error

    if isinstance(config.cutoff, str):
        try:
            config.cutoff = date.fromisoformat(config.cutoff)
        except ValueError as error:
            raise ConfigError("cutoff", str(error)) from error

    _validate(config)
    return config


def _validate(config: CliConfig) -> None:
    if config.granularity not in (GRAM3_NAME, WORD_NAME):
        raise ConfigError("granularity", f"must be {GRAM3_NAME} or {WORD_NAME}")
    if config.metric not in (COSINE, EUCLIDEAN):
        raise ConfigError("metric", f"must be {COSINE} or {EUCLIDEAN}")
    for name in ("k", "dimension", "window", "negatives", "epochs", "threads"):
        if getattr(config, name) < 1:
            raise ConfigError(name, "must be >= 1")
    for name in ("threshold", "min_count", "seed"):
        if getattr(config, name) < 0:
            raise ConfigError(name, "must be >= 0")
    if config.noise_table_size < 1:
        raise ConfigError("noise_table_size", "must be >= 1")
    if not 0.0 <= config.typo_rate <= 1.0:
        raise ConfigError("typo_rate", "must be in [0, 1]")
    if config.embedding_source != "train-sgns" and not Path(config.embedding_source).is_file():
        raise ConfigError("embedding_source", f"file not found: {config.embedding_source}")


def _require_corpus(config: CliConfig) -> Corpus:
    if not config.corpus:
        raise ConfigError("corpus", "no corpus path configured")
    if not Path(config.corpus).is_file():
        raise ConfigError("corpus", f"file not found: {config.corpus}")
    return load_corpus(config.corpus)


def _require_artifact(path: Path, producer: str) -> Path:
    if not path.is_file():
        raise MissingArtifact(path, producer)
    return path


def _atomic_write(path: Path, writer: Callable[[Path], None]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


def _atomic_text(path: Path, text: str) -> None:
    _atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


# --- artifact paths ----------------------------------------------------------


def _vectors_path(out: Path, granularity: str) -> Path:
    return out / f"embeddings-{granularity}.vec"


def _ingredient_vectors_path(out: Path) -> Path:
    return out / "embeddings-ingredients.vec"


def _index_path(out: Path, granularity: str) -> Path:
    return out / f"index-{granularity}.npz"


def _candidates_path(out: Path, method: str) -> Path:
    return out / f"candidates-{method}.jsonl"


# --- index persistence -------------------------------------------------------


def save_index(path: Path, index: MoverIndex, granularity: str, method: str) -> None:
    supports = (
        np.concatenate([entry.hist.support for entry in index.entries])
        if index.entries
        else np.zeros(0, dtype=np.int64)
    )
    weights = (
        np.concatenate([entry.hist.weights for entry in index.entries])
        if index.entries
        else np.zeros(0, dtype=np.float64)
    )
    offsets = np.zeros(len(index.entries) + 1, dtype=np.int64)
    for i, entry in enumerate(index.entries):
        offsets[i + 1] = offsets[i] + len(entry.hist.support)

    def writer(tmp: Path) -> None:
        # hand savez an open handle: with a bare path it appends ".npz",
        # which would break the temp-file rename
        with open(tmp, "wb") as handle:
            np.savez(
                handle,
                tokens=np.array(index.table.vocab.tokens, dtype=str),
                vectors=index.table.vectors,
                doc_ids=np.array([entry.doc_id for entry in index.entries], dtype=str),
                offsets=offsets,
                supports=supports,
                weights=weights,
                skipped=np.array(index.skipped, dtype=str),
                granularity=np.array(granularity),
                metric=np.array(index.metric),
                method=np.array(method),
            )

    _atomic_write(path, writer)


def load_index(path: Path) -> tuple[MoverIndex, str, str]:
    with np.load(path, allow_pickle=False) as data:
        tokens = [str(token) for token in data["tokens"]]
        vocab = Vocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)}, counts=None)
        table = EmbeddingTable(vocab=vocab, vectors=data["vectors"])
        metric = str(data["metric"])
        granularity = str(data["granularity"])
        method = str(data["method"])
        offsets = data["offsets"]
        supports = data["supports"]
        weights = data["weights"]
        entries = []
        for i, doc_id in enumerate(data["doc_ids"]):
            lo, hi = int(offsets[i]), int(offsets[i + 1])
            hist = GramHistogram(
                support=supports[lo:hi], weights=weights[lo:hi], granularity=granularity
            )
            entries.append(prepare_histogram(str(doc_id), hist, table, metric))
        skipped = [str(doc_id) for doc_id in data["skipped"]]
    return (
        MoverIndex(table=table, metric=metric, entries=entries, skipped=skipped),
        granularity,
        method,
    )


# --- subcommands -------------------------------------------------------------


def _cmd_synth_corpus(config: CliConfig, args: argparse.Namespace) -> int:
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    corpus, truth = generate_corpus(
        seed=config.seed,
        train_size=config.train_size,
        planted=config.planted,
        fresh=config.fresh,
        pool_size=config.pool_size,
        typo_rate=config.typo_rate,
    )
    _atomic_write(out / "corpus.jsonl", lambda tmp: save_corpus(corpus, tmp))
    _atomic_write(out / "truth.jsonl", lambda tmp: save_truth(truth, tmp))
    logger.info(
        "wrote %d recipes (%d planted duplicates) to %s", len(corpus), len(truth), out
    )
    return 0


def _cmd_train_embeddings(config: CliConfig, args: argparse.Namespace) -> int:
    corpus = _require_corpus(config)
    train, _ = split_by_date(corpus, config.cutoff)
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)

    docs = [tokens for _, tokens in build_instruction_docs(train, config.granularity)]
    table = train_sgns(docs, config.sgns_config())
    path = _vectors_path(out, config.granularity)
    _atomic_write(path, lambda tmp: save_vectors(table, tmp))
    logger.info("wrote %d instruction vectors to %s", len(table.vocab.tokens), path)

    ingredient_table = train_ingredient_table(train, seed=config.seed + 1)
    if ingredient_table is not None:
        ing_path = _ingredient_vectors_path(out)
        _atomic_write(ing_path, lambda tmp: save_vectors(ingredient_table, tmp))
        logger.info(
            "wrote %d ingredient vectors to %s", len(ingredient_table.vocab.tokens), ing_path
        )
    else:
        logger.warning("ingredient embedding skipped (degenerate ingredient lists)")
    return 0


def _load_instruction_table(config: CliConfig, out: Path) -> EmbeddingTable:
    if config.embedding_source == "train-sgns":
        path = _require_artifact(_vectors_path(out, config.granularity), "train-embeddings")
    else:
        path = Path(config.embedding_source)
    return load_vectors(path)


def _load_ingredient_table(out: Path) -> EmbeddingTable | None:
    path = _ingredient_vectors_path(out)
    if not path.is_file():
        return None
    return load_vectors(path)


def _cmd_build_index(config: CliConfig, args: argparse.Namespace) -> int:
    corpus = _require_corpus(config)
    train, _ = split_by_date(corpus, config.cutoff)
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    table = _load_instruction_table(config, out)
    index = nbow_histograms(train, config.granularity, table, config.metric)
    path = _index_path(out, config.granularity)
    save_index(path, index, config.granularity, config.method())
    logger.info(
        "indexed %d documents (%d skipped) to %s", len(index.entries), len(index.skipped), path
    )
    return 0


def _cmd_extract_candidates(config: CliConfig, args: argparse.Namespace) -> int:
    corpus = _require_corpus(config)
    train, test = split_by_date(corpus, config.cutoff)
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    index_path = _require_artifact(_index_path(out, config.granularity), "build-index")
    index, granularity, method = load_index(index_path)
    ingredient_table = _load_ingredient_table(out)
    if ingredient_table is None:
        raise MissingArtifact(_ingredient_vectors_path(out), "train-embeddings")

    stats = ExtractionStats()

    def retrieve(query):
        return topk_query(
            query, index, config.k, pruning=True, stats=stats.search, threads=config.threads
        )

    pairs = extract_with_retriever(
        test,
        train,
        method,
        granularity,
        retrieve,
        ingredient_table=ingredient_table,
        threshold=config.threshold,
        stats=stats,
    )
    path = _candidates_path(out, method)
    _atomic_write(path, lambda tmp: save_pairs(pairs, tmp))
    logger.info(
        "%d candidate pairs from %d queries (%d skipped, %d exact distance evaluations) to %s",
        len(pairs),
        stats.queries_total,
        len(stats.queries_skipped),
        stats.search.exact_evaluations,
        path,
    )
    return 0


def _cmd_baseline(config: CliConfig, args: argparse.Namespace) -> int:
    corpus = _require_corpus(config)
    train, test = split_by_date(corpus, config.cutoff)
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    ingredient_table = _load_ingredient_table(out)
    if ingredient_table is None:
        raise MissingArtifact(_ingredient_vectors_path(out), "train-embeddings")
    stats = ExtractionStats()
    pairs = extract_candidates(
        test,
        train,
        METHOD_TFIDF,
        ingredient_table=ingredient_table,
        k=config.k,
        threshold=config.threshold,
        baseline_words=config.baseline_words,
        stats=stats,
    )
    path = _candidates_path(out, METHOD_TFIDF)
    _atomic_write(path, lambda tmp: save_pairs(pairs, tmp))
    logger.info(
        "%d baseline pairs from %d queries (%d skipped) to %s",
        len(pairs),
        stats.queries_total,
        len(stats.queries_skipped),
        path,
    )
    return 0


def _pair_files(config: CliConfig, args: argparse.Namespace) -> list[Path]:
    if getattr(args, "pairs", None):
        paths = [Path(p) for p in args.pairs]
        for path in paths:
            if not path.is_file():
                raise MissingArtifact(path, "extract-candidates")
        return paths
    found = sorted(config.out_dir().glob("candidates-*.jsonl"))
    if not found:
        raise MissingArtifact(config.out_dir() / "candidates-*.jsonl", "extract-candidates")
    return found


def _cmd_classify(config: CliConfig, args: argparse.Namespace) -> int:
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    pairs = []
    for path in _pair_files(config, args):
        pairs.extend(load_pairs(path))
    examples = examples_from_pairs(pairs)
    if not examples:
        print("no labeled pairs to classify", file=sys.stderr)
        return 1
    try:
        balanced = undersample(examples, seed=config.seed)
    except ValueError as error:
        print(f"cannot undersample: {error}", file=sys.stderr)
        return 1

    summary: dict = {"examples": len(examples), "balanced": len(balanced), "models": {}}
    lines = ["model  F1  Recall  Precision  hyperparameters"]
    for kind in (LOGISTIC, FOREST):
        result = loocv_grid_search(balanced, kind, seed=config.seed)
        m = result.best_metrics
        summary["models"][kind] = {
            "best_params": result.best_params,
            "f1": m.f1,
            "recall": m.recall,
            "precision": m.precision,
            "grid": [
                {"params": point.params, "f1": point.metrics.f1} for point in result.results
            ],
        }
        lines.append(
            f"{kind}  {m.f1:.2f}  {m.recall:.2f}  {m.precision:.2f}  {result.best_params}"
        )
        logger.info("%s: F1 %.3f with %s", kind, m.f1, result.best_params)
    _atomic_text(out / "classifier-metrics.json", json.dumps(summary, indent=2) + "\n")
    _atomic_text(out / "classifier-metrics.txt", "\n".join(lines) + "\n")
    return 0


def _cmd_report(config: CliConfig, args: argparse.Namespace) -> int:
    out = config.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    by_method: dict[str, list] = {}
    for path in _pair_files(config, args):
        for pair in load_pairs(path):
            by_method.setdefault(pair.method, []).append(pair)
    summary = compare_methods(by_method)
    _atomic_text(out / "report.json", json.dumps(summary, indent=2, ensure_ascii=False) + "\n")
    _atomic_text(out / "report.txt", comparison_text(summary))
    logger.info("report over %d methods written to %s", len(by_method), out)
    return 0


_COMMANDS = {
    "synth-corpus": _cmd_synth_corpus,
    "train-embeddings": _cmd_train_embeddings,
    "build-index": _cmd_build_index,
    "extract-candidates": _cmd_extract_candidates,
    "baseline": _cmd_baseline,
    "classify": _cmd_classify,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value settings file")
    common.add_argument("--corpus", help="recipe corpus (JSON Lines)")
    common.add_argument("--cutoff", help="train/test split date (YYYY-MM-DD)")
    common.add_argument("--granularity", choices=(GRAM3_NAME, WORD_NAME))
    common.add_argument(
        "--embedding-source",
        dest="embedding_source",
        help="'train-sgns' or a path to a text-format vector file",
    )
    common.add_argument("--metric", choices=(COSINE, EUCLIDEAN))
    common.add_argument("--k", type=int, help="retrieval depth per query")
    common.add_argument("--threshold", type=int, help="ingredients-distance filter")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="artifact directory")
    common.add_argument("--threads", type=int, help="worker threads (1 = reproducible)")
    common.add_argument("--verbose", action="store_true")
    for name in ("dimension", "window", "negatives", "epochs", "min-count", "noise-table-size"):
        common.add_argument(f"--{name}", dest=name.replace("-", "_"), type=int)
    for name in ("subsample-threshold", "initial-step-size", "final-step-size"):
        common.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    common.add_argument(
        "--baseline-words",
        dest="baseline_words",
        action="store_const",
        const=True,
        help="run the tf-idf baseline on word tokens instead of 3-grams",
    )

    parser = argparse.ArgumentParser(
        prog="gram-mover",
        description="Near-duplicate recipe detection via a mover's distance over character 3-grams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth-corpus", parents=[common], help="generate the planted-duplicate corpus")
    for name in ("train-size", "planted", "fresh", "pool-size"):
        sub.choices["synth-corpus"].add_argument(
            f"--{name}", dest=name.replace("-", "_"), type=int
        )
    sub.choices["synth-corpus"].add_argument("--typo-rate", dest="typo_rate", type=float)
    sub.add_parser("train-embeddings", parents=[common], help="train instruction and ingredient embeddings")
    sub.add_parser("build-index", parents=[common], help="prepare train-side histograms for search")
    sub.add_parser("extract-candidates", parents=[common], help="mover-distance retrieval + ingredients filter")
    sub.add_parser("baseline", parents=[common], help="tf-idf retrieval + ingredients filter")
    classify_parser = sub.add_parser("classify", parents=[common], help="train and evaluate pair classifiers")
    classify_parser.add_argument("--pairs", nargs="+", help="labeled candidate-pair files")
    report_parser = sub.add_parser("report", parents=[common], help="compare methods over labeled pairs")
    report_parser.add_argument("--pairs", nargs="+", help="candidate-pair files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = resolve_config(args)
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](config, args)
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return 2
    except MissingArtifact as error:
        print(str(error), file=sys.stderr)
        return 3
    except ValueError as error:
        print(f"error: {error}", file=sys.stderr)
        return 1
