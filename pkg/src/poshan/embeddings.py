"""Embedding tables for words and cardinal POS patterns, and the three
query vectors (pattern, cardinal phrase, headline) that condition the
attention scorers.

Row 0 of the word table is the padding/sentinel row: always zero, never
on any gradient path.  Row 1 is the unknown-word row.
"""

from __future__ import annotations

import warnings
from typing import Iterable, Sequence

import numpy as np

from .grad import Parameter, Tensor, constant, mean_vectors, pick_row, sum_vectors
from .text import (
    BOS_TOKEN,
    CONGRUENT,
    EOS_TOKEN,
    INCONGRUENT,
    CardinalPhrase,
    DataError,
    DatasetRecord,
    NoCardinalError,
)

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1
UNK_PATTERN = "<unk>"

MODE_PRELOADED_FROZEN = "preloaded-frozen"
MODE_PRELOADED_TRAINABLE = "preloaded-trainable"
MODE_RANDOM_TRAINABLE = "random-trainable"

# query modes for multi-cardinal records
ACTIVE = "active"
MEAN_POOL = "meanpool"

INIT_RANGE = 0.05
PATTERN_DIM = 100

_SENTINELS = frozenset({PAD_TOKEN, BOS_TOKEN, EOS_TOKEN})


class WordEmbeddingTable:
    """Token to row-index map over a single embedding matrix.

    Sentinel tokens resolve to the zero padding row; unseen tokens resolve
    to the unknown row.  Lookups of the padding row return a constant, so
    no gradient can ever reach it.
    """

    def __init__(self, vocab: dict, matrix: Parameter, mode: str):
        self.vocab = vocab
        self.matrix = matrix
        self.mode = mode

    @property
    def dim(self) -> int:
        return self.matrix.data.shape[1]

    @property
    def size(self) -> int:
        return self.matrix.data.shape[0]

    def index(self, token: str) -> int:
        if token in _SENTINELS:
            return PAD_INDEX
        return self.vocab.get(token, UNK_INDEX)

    def lookup(self, token: str) -> Tensor:
        idx = self.index(token)
        if idx == PAD_INDEX:
            return constant(np.zeros(self.dim))
        return pick_row(self.matrix.value, idx)


def build_vocab(corpus: Sequence[DatasetRecord], min_count: int = 1,
                dim: int = 64, seed: int = 0) -> WordEmbeddingTable:
    """Random-trainable table over all corpus tokens seen at least
    ``min_count`` times, in sorted token order."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    if not corpus:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for rec in corpus:
        for tok in rec.headline:
            counts[tok.text] = counts.get(tok.text, 0) + 1
        for sent in rec.sentences:
            for tok in sent:
                counts[tok.text] = counts.get(tok.text, 0) + 1
    kept = sorted(t for t, c in counts.items() if c >= min_count)
    vocab = {t: i + 2 for i, t in enumerate(kept)}
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(len(kept) + 2, dim))
    matrix[PAD_INDEX] = 0.0
    param = Parameter("word_embeddings", matrix, trainable=True)
    return WordEmbeddingTable(vocab, param, MODE_RANDOM_TRAINABLE)


def load_pretrained(path, expected_dim: int,
                    trainable: bool = False) -> WordEmbeddingTable:
    """Read a text vector file: one line per token, token then
    ``expected_dim`` space-separated floats.

    The unknown row is the arithmetic mean of all loaded rows.
    """
    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split()
            token, values = parts[0], parts[1:]
            if token in _SENTINELS or token == UNK_TOKEN:
                raise DataError(f"{path}:{lineno}: reserved token {token!r}")
            if token in seen:
                raise DataError(f"{path}:{lineno}: duplicate token {token!r}")
            if len(values) != expected_dim:
                raise DataError(
                    f"{path}:{lineno}: expected {expected_dim} values, "
                    f"got {len(values)}")
            try:
                rows.append([float(v) for v in values])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
            seen.add(token)
            tokens.append(token)
    if not rows:
        raise DataError(f"{path}: no vectors found")
    loaded = np.asarray(rows, dtype=np.float64)
    matrix = np.zeros((len(tokens) + 2, expected_dim))
    matrix[UNK_INDEX] = loaded.mean(axis=0)
    matrix[2:] = loaded
    vocab = {t: i + 2 for i, t in enumerate(tokens)}
    mode = MODE_PRELOADED_TRAINABLE if trainable else MODE_PRELOADED_FROZEN
    param = Parameter("word_embeddings", matrix, trainable=trainable)
    return WordEmbeddingTable(vocab, param, mode)


class PatternEmbeddingTable:
    """Cardinal POS pattern strings to trainable rows; index 0 is the
    unknown-pattern row."""

    def __init__(self, patterns: dict, matrix: Parameter):
        self.patterns = patterns
        self.matrix = matrix

    @property
    def dim(self) -> int:
        return self.matrix.data.shape[1]

    @property
    def size(self) -> int:
        return self.matrix.data.shape[0]

    def index(self, key: str) -> int:
        return self.patterns.get(key, 0)

    def lookup(self, key: str) -> Tensor:
        return pick_row(self.matrix.value, self.index(key))

    @classmethod
    def build(cls, corpus: Iterable[DatasetRecord], dim: int = PATTERN_DIM,
              seed: int = 0) -> "PatternEmbeddingTable":
        keys = sorted({p.key for rec in corpus for p in rec.patterns})
        patterns = {k: i + 1 for i, k in enumerate(keys)}
        rng = np.random.default_rng(seed)
        matrix = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(len(keys) + 1, dim))
        param = Parameter("pattern_embeddings", matrix, trainable=True)
        return cls(patterns, param)


# ---------------------------------------------------------------------------
# Query vectors


def headline_vector(tokens: Sequence[str], table: WordEmbeddingTable) -> Tensor:
    """Sum of the embeddings of all headline tokens (padding excluded)."""
    vecs = [table.lookup(t) for t in tokens if table.index(t) != PAD_INDEX]
    if not vecs:
        warnings.warn("empty headline: query vector is zero", RuntimeWarning)
        return constant(np.zeros(table.dim))
    return sum_vectors(vecs)


def cardinal_phrase_vector(phrase: CardinalPhrase,
                           table: WordEmbeddingTable) -> Tensor:
    """Sum of the embeddings of the three phrase words; sentinel tokens
    contribute the zero row."""
    return sum_vectors([table.lookup(t)
                        for t in (phrase.prev, phrase.num, phrase.next)])


def pattern_query(record: DatasetRecord, table: PatternEmbeddingTable,
                  mode: str) -> Tensor:
    """Pattern query vector for one record.

    Active mode (training) selects the embedding at the record's active
    cardinal index; mean-pool mode (inference) averages the embeddings of
    all the record's patterns.
    """
    if not record.patterns:
        raise NoCardinalError(
            f"record {record.id!r} has no cardinal pattern to query")
    if mode == ACTIVE:
        if record.active_cardinal_index is None:
            raise ValueError(
                f"record {record.id!r}: active mode requires an active "
                "cardinal index")
        return table.lookup(record.patterns[record.active_cardinal_index].key)
    if mode == MEAN_POOL:
        return mean_vectors([table.lookup(p.key) for p in record.patterns])
    raise ValueError(f"unknown pattern query mode {mode!r}")


def phrase_query(record: DatasetRecord, table: WordEmbeddingTable,
                 mode: str) -> Tensor:
    """Cardinal phrase query vector; same mode semantics as pattern_query."""
    if not record.phrases:
        raise NoCardinalError(
            f"record {record.id!r} has no cardinal phrase to query")
    if mode == ACTIVE:
        if record.active_cardinal_index is None:
            raise ValueError(
                f"record {record.id!r}: active mode requires an active "
                "cardinal index")
        return cardinal_phrase_vector(
            record.phrases[record.active_cardinal_index], table)
    if mode == MEAN_POOL:
        return mean_vectors([cardinal_phrase_vector(p, table)
                             for p in record.phrases])
    raise ValueError(f"unknown phrase query mode {mode!r}")


# ---------------------------------------------------------------------------
# Exports


def format_float(x: float) -> str:
    return repr(float(x))


def export_pattern_embeddings(table: PatternEmbeddingTable, path) -> None:
    """TSV: pattern string followed by its embedding row; unknown row first."""
    ordered = [(UNK_PATTERN, 0)] + sorted(table.patterns.items(), key=lambda kv: kv[1])
    with open(path, "w", encoding="utf-8") as fh:
        for key, idx in ordered:
            row = "\t".join(format_float(v) for v in table.matrix.data[idx])
            fh.write(f"{key}\t{row}\n")


def pattern_label_counts(records: Iterable[DatasetRecord]) -> dict:
    """Per pattern: [congruent count, incongruent count] over the records."""
    counts: dict[str, list[int]] = {}
    for rec in records:
        col = 0 if rec.label == CONGRUENT else 1
        for p in rec.patterns:
            counts.setdefault(p.key, [0, 0])[col] += 1
    return counts


def export_pattern_majority(counts: dict, path) -> None:
    """TSV: pattern, majority label, congruent count, incongruent count.

    Ties resolve to congruent.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("pattern\tmajority_label\tcongruent\tincongruent\n")
        for key in sorted(counts):
            c, i = counts[key]
            majority = INCONGRUENT if i > c else CONGRUENT
            fh.write(f"{key}\t{majority}\t{c}\t{i}\n")
