"""Skip-gram negative-sampling embeddings over word or n-gram streams.

The trainer is a plain numpy implementation: input and output vector tables,
logistic loss against noise samples drawn from the unigram distribution raised
to 3/4, dynamic window, frequency subsampling, and a linearly decayed step
size. Single-threaded runs are bitwise reproducible for a fixed seed.
"""

from __future__ import annotations

import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .tokenize import TokenSeq

logger = logging.getLogger(__name__)

_ESCAPE_RE = re.compile(r"\\u([0-9a-fA-F]{4})")


@dataclass
class Vocab:
    """Token/index bijection over tokens retained by a frequency threshold."""

    tokens: list[str]
    index: dict[str, int]
    counts: np.ndarray | None
    min_count: int = 0

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass
class SgnsConfig:
    dimension: int = 100
    window: int = 15
    negatives: int = 5
    epochs: int = 5
    initial_step_size: float = 0.025
    final_step_size: float = 1e-4
    subsample_threshold: float = 1e-4  # <= 0 disables subsampling
    min_count: int = 5
    seed: int = 1
    noise_table_size: int = 10_000_000

    def validated(self) -> "SgnsConfig":
        for name in ("dimension", "window", "negatives", "epochs", "min_count", "noise_table_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.initial_step_size <= 0 or self.final_step_size <= 0:
            raise ValueError("step sizes must be positive")
        return self


@dataclass
class EmbeddingTable:
    """Dense vectors aligned with a vocab; immutable after training/loading."""

    vocab: Vocab
    vectors: np.ndarray
    _units: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocab):
            raise ValueError("vectors must be one row per vocab entry")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("vectors must be finite")

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def vector(self, token: str) -> np.ndarray:
        return self.vectors[self.vocab.index[token]]

    def unit_vectors(self) -> np.ndarray:
        """Rows normalized to unit length; zero rows stay zero. Cached."""
        if self._units is None:
            norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
            safe = np.where(norms > 0, norms, 1.0)
            object.__setattr__(self, "_units", self.vectors / safe)
        return self._units


def build_vocab(tokens: Iterable[str], min_count: int = 1) -> Vocab:
    """Retain tokens with frequency >= min_count, indexed by descending
    frequency with lexicographic tie-break."""
    counts = Counter(tokens)
    retained = sorted(
        ((token, count) for token, count in counts.items() if count >= min_count),
        key=lambda item: (-item[1], item[0]),
    )
    if not retained:
        raise ValueError("no tokens meet the min_count threshold; vocabulary is empty")
    token_list = [token for token, _ in retained]
    return Vocab(
        tokens=token_list,
        index={token: pos for pos, token in enumerate(token_list)},
        counts=np.array([count for _, count in retained], dtype=np.int64),
        min_count=min_count,
    )


def _noise_table(counts: np.ndarray, size: int) -> np.ndarray:
    weights = counts.astype(np.float64) ** 0.75
    cumulative = np.cumsum(weights / weights.sum())
    positions = (np.arange(size) + 0.5) / size
    table = np.searchsorted(cumulative, positions)
    return np.minimum(table, len(counts) - 1).astype(np.int32)


def _encode_documents(documents: Sequence[TokenSeq], vocab: Vocab) -> list[np.ndarray]:
    encoded = []
    for doc in documents:
        ids = [vocab.index[t] for t in doc.tokens if t in vocab.index]
        encoded.append(np.asarray(ids, dtype=np.int32))
    return encoded


def train_sgns(
    documents: Sequence[TokenSeq],
    config: SgnsConfig,
    epoch_losses: list[float] | None = None,
    threads: int = 1,
) -> EmbeddingTable:
    """Train input vectors with SGNS over the documents' token streams.

    With threads=1 the update order is fixed by the seed and results are
    bitwise reproducible. threads>1 shares the parameter arrays across workers
    without locks (relaxed consistency, not reproducible); epoch_losses is
    only tracked single-threaded.
    """
    config = config.validated()
    granularities = {doc.granularity for doc in documents if len(doc)}
    if len(granularities) > 1:
        raise ValueError(f"documents mix granularities: {sorted(granularities)}")

    vocab = build_vocab(
        (token for doc in documents for token in doc.tokens), config.min_count
    )
    encoded = _encode_documents(documents, vocab)
    if all(len(doc) < 2 for doc in encoded):
        raise ValueError("degenerate corpus: every document has fewer than 2 in-vocab tokens")

    rng = np.random.default_rng(config.seed)
    size = len(vocab)
    syn0 = ((rng.random((size, config.dimension)) - 0.5) / config.dimension).astype(np.float32)
    syn1 = np.zeros((size, config.dimension), dtype=np.float32)
    noise = _noise_table(vocab.counts, config.noise_table_size)

    total_tokens = sum(len(doc) for doc in encoded)
    if config.subsample_threshold > 0:
        frequencies = vocab.counts / vocab.counts.sum()
        ratio = config.subsample_threshold / frequencies
        keep_prob = np.minimum(1.0, np.sqrt(ratio) + ratio)
    else:
        keep_prob = None

    state = _TrainState(syn0, syn1, noise, keep_prob, config, total_tokens)
    if threads <= 1:
        for epoch in range(config.epochs):
            loss = _train_epoch(encoded, state, rng, epoch, track_loss=epoch_losses is not None)
            if epoch_losses is not None:
                epoch_losses.append(loss)
    else:
        _train_parallel(encoded, state, config, threads)

    return EmbeddingTable(vocab=vocab, vectors=syn0)


@dataclass
class _TrainState:
    syn0: np.ndarray
    syn1: np.ndarray
    noise: np.ndarray
    keep_prob: np.ndarray | None
    config: SgnsConfig
    total_tokens: int
    processed: int = 0


def _train_epoch(
    encoded: list[np.ndarray],
    state: _TrainState,
    rng: np.random.Generator,
    epoch: int,
    track_loss: bool = False,
) -> float:
    config = state.config
    loss_sum = 0.0
    pair_count = 0
    schedule_span = max(1, config.epochs * state.total_tokens)
    for doc in encoded:
        if len(doc) < 2:
            state.processed += len(doc)
            continue
        if state.keep_prob is not None:
            kept = doc[rng.random(len(doc)) < state.keep_prob[doc]]
        else:
            kept = doc
        state.processed += len(doc)
        if len(kept) < 2:
            continue
        step = max(
            config.final_step_size,
            config.initial_step_size * (1.0 - state.processed / schedule_span),
        )
        loss_sum += _train_document(kept, state, rng, np.float32(step), track_loss)
        pair_count += len(kept)
    return loss_sum / max(1, pair_count)


def _train_document(
    kept: np.ndarray,
    state: _TrainState,
    rng: np.random.Generator,
    step: np.float32,
    track_loss: bool,
) -> float:
    config = state.config
    syn0, syn1 = state.syn0, state.syn1
    noise = state.noise
    n = len(kept)
    spans = rng.integers(1, config.window + 1, size=n)
    loss = 0.0
    for pos in range(n):
        span = spans[pos]
        lo = max(0, pos - span)
        contexts = np.concatenate([kept[lo:pos], kept[pos + 1:pos + span + 1]])
        if len(contexts) == 0:
            continue
        center = kept[pos]
        negatives = noise[rng.integers(0, len(noise), size=(len(contexts), config.negatives))]

        targets = np.concatenate([contexts, negatives.ravel()])
        labels = np.zeros(len(targets), dtype=np.float32)
        labels[: len(contexts)] = 1.0
        # negatives that collide with their positive target are skipped
        collisions = (negatives == contexts[:, None]).ravel()
        if collisions.any():
            mask = np.ones(len(targets), dtype=bool)
            mask[len(contexts):] = ~collisions
            targets = targets[mask]
            labels = labels[mask]

        v = syn0[center]
        rows = syn1[targets]
        raw = np.clip(rows.dot(v), -30.0, 30.0)
        scores = 1.0 / (1.0 + np.exp(-raw))
        gradient = (labels - scores) * step
        if track_loss:
            eps = 1e-10
            positive = scores[labels == 1.0]
            negative = scores[labels == 0.0]
            loss -= float(np.log(positive + eps).sum() + np.log1p(-negative + eps).sum())
        np.add.at(syn1, targets, gradient[:, None] * v[None, :])
        syn0[center] = v + gradient.dot(rows)
    return loss


def _train_parallel(encoded, state, config, threads):
    # Lock-free shared updates: workers stride over documents with private
    # generators. Throughput mode only; results are not reproducible.
    def worker(worker_id: int):
        rng = np.random.default_rng(config.seed + 1000 + worker_id)
        for epoch in range(config.epochs):
            for doc in encoded[worker_id::threads]:
                if len(doc) < 2:
                    continue
                if state.keep_prob is not None:
                    kept = doc[rng.random(len(doc)) < state.keep_prob[doc]]
                else:
                    kept = doc
                if len(kept) < 2:
                    continue
                done = state.processed + epoch * state.total_tokens
                step = max(
                    config.final_step_size,
                    config.initial_step_size
                    * (1.0 - done / max(1, config.epochs * state.total_tokens)),
                )
                _train_document(kept, state, rng, np.float32(step), False)
                state.processed += len(doc)

    pool = [threading.Thread(target=worker, args=(i,)) for i in range(threads)]
    for thread in pool:
        thread.start()
    for thread in pool:
        thread.join()


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2]. A zero vector yields 1 (logged)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        logger.warning("cosine_distance on a zero vector; returning 1.0")
        return 1.0
    return float(np.clip(1.0 - u.dot(v) / (nu * nv), 0.0, 2.0))


def nearest_neighbors(
    table: EmbeddingTable, token: str, k: int
) -> list[tuple[str, float]]:
    """Exact k nearest tokens by cosine similarity, excluding the query.

    Ties break toward the smaller vocab index. Unknown tokens yield [].
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if token not in table.vocab:
        return []
    units = table.unit_vectors()
    query_index = table.vocab.index[token]
    sims = units @ units[query_index]
    order = np.lexsort((np.arange(len(sims)), -sims))
    result = []
    for idx in order:
        if idx == query_index:
            continue
        result.append((table.vocab.tokens[idx], float(sims[idx])))
        if len(result) == k:
            break
    return result


def _escape_token(token: str) -> str:
    return "".join(
        f"\\u{ord(ch):04x}" if ch == "\\" or ch.isspace() else ch for ch in token
    )


def _unescape_token(token: str) -> str:
    return _ESCAPE_RE.sub(lambda m: chr(int(m.group(1), 16)), token)


def save_vectors(table: EmbeddingTable, path: str | Path) -> None:
    """Write the word2vec/fastText text format: header `count dim`, then one
    `token c1 ... cd` line per row. Whitespace inside tokens is escaped as
    \\uXXXX sequences (backslash itself as \\u005c)."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"{len(table.vocab)} {table.dimension}\n")
        for pos, token in enumerate(table.vocab.tokens):
            components = " ".join(repr(float(x)) for x in table.vectors[pos])
            handle.write(f"{_escape_token(token)} {components}\n")


def load_vectors(path: str | Path) -> EmbeddingTable:
    """Read the text vector format back; errors carry the offending line number."""
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().split()
        if len(header) != 2:
            raise ValueError("header must be '<count> <dimension>'")
        try:
            count, dimension = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValueError(f"non-numeric header: {exc}") from exc
        tokens = []
        vectors = np.empty((count, dimension), dtype=np.float32)
        row = 0
        for lineno, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            if row >= count:
                raise ValueError(f"row count mismatch: header declares {count} rows")
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dimension + 1:
                raise ValueError(
                    f"line {lineno}: expected {dimension} components, got {len(parts) - 1}"
                )
            try:
                vectors[row] = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"line {lineno}: non-numeric component: {exc}") from exc
            tokens.append(_unescape_token(parts[0]))
            row += 1
    if row != count:
        raise ValueError(f"row count mismatch: header declares {count} rows, found {row}")
    if len(set(tokens)) != len(tokens):
        raise ValueError("duplicate token in vector file")
    vocab = Vocab(tokens=tokens, index={t: i for i, t in enumerate(tokens)}, counts=None)
    return EmbeddingTable(vocab=vocab, vectors=vectors)
