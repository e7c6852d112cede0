"""Training loop, optimizer, configuration, and checkpointing.

Everything here is deterministic: given the same config, data, and seed,
two runs produce bit-identical parameter values, log lines, and
checkpoint bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attention import PaddedRecord, pad_record
from .baselines import INIT_NEAR_ZERO, LstmConcatModel, PosAtModel
from .embeddings import (
    ACTIVE,
    MEAN_POOL,
    MODE_PRELOADED_FROZEN,
    PATTERN_DIM,
    PatternEmbeddingTable,
    WordEmbeddingTable,
    build_vocab,
    pattern_label_counts,
)
from .encoder import CELL_GRU_BI, CELL_LSTM_BI, CELL_LSTM_UNI
from .grad import NonFiniteError, Parameter, backward, collect_gradients, zero_gradients
from .metrics import EvalReport, evaluate_model
from .model import PoshanModel
from .text import DataError, DatasetRecord, replicate_for_training

MODEL_POSHAN = "poshan"
MODEL_LSTM = "lstm"
MODEL_POSAT = "posat"
MODEL_KINDS = (MODEL_POSHAN, MODEL_LSTM, MODEL_POSAT)

_CELLS = (CELL_LSTM_BI, CELL_GRU_BI, CELL_LSTM_UNI)

# Minimum drop in validation loss that counts as progress for early stopping.
IMPROVEMENT_THRESHOLD = 1e-4

CHECKPOINT_MAGIC = b"POSHAN-CKPT-1\n"

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass
class TrainConfig:
    """Hyperparameters and architecture switches for one training run.

    Field names map one-to-one onto kebab-case keys in config files,
    e.g. ``learning_rate`` is written as ``learning-rate``.
    """

    learning_rate: float = 0.003
    batch_size: int = 128
    grad_clip: float = 6.0
    max_epochs: int = 50
    early_stop_patience: int = 5
    max_words_per_sentence: int = 45
    max_sentences: int = 35
    word_dim: int = 64
    hidden_size: int = 16
    attention_size: Optional[int] = None
    pattern_dim: int = PATTERN_DIM
    min_count: int = 1
    seed: int = 0
    cell: str = CELL_LSTM_BI
    disable_pattern_att: bool = False
    disable_phrase_att: bool = False
    replace_headline_att: bool = False

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning-rate must be positive, got {self.learning_rate}")
        if self.grad_clip <= 0:
            raise ValueError(f"grad-clip must be positive, got {self.grad_clip}")
        for name in (
            "batch_size",
            "max_epochs",
            "early_stop_patience",
            "max_words_per_sentence",
            "max_sentences",
            "word_dim",
            "hidden_size",
            "pattern_dim",
            "min_count",
        ):
            value = getattr(self, name)
            if value < 1:
                key = name.replace("_", "-")
                raise ValueError(f"{key} must be at least 1, got {value}")
        if self.attention_size is not None and self.attention_size < 1:
            raise ValueError(f"attention-size must be at least 1, got {self.attention_size}")
        if self.cell not in _CELLS:
            raise ValueError(f"unknown cell {self.cell!r}; expected one of {_CELLS}")


def _field_types() -> dict[str, type]:
    types: dict[str, type] = {}
    for f in dataclasses.fields(TrainConfig):
        types[f.name] = f.type  # type: ignore[assignment]
    return types


def _parse_value(key: str, raw: str, line_no: int):
    """Convert one config-file value string to the field's Python type."""
    name = key.replace("-", "_")
    hints = {
        "learning_rate": float,
        "grad_clip": float,
        "cell": str,
        "attention_size": "optional-int",
        "disable_pattern_att": bool,
        "disable_phrase_att": bool,
        "replace_headline_att": bool,
    }
    kind = hints.get(name, int)
    text = raw.strip()
    try:
        if kind is float:
            return float(text)
        if kind is str:
            return text
        if kind is bool:
            lowered = text.lower()
            if lowered in ("true", "false"):
                return lowered == "true"
            raise ValueError(text)
        if kind == "optional-int":
            if text.lower() == "none":
                return None
            return int(text)
        return int(text)
    except ValueError:
        raise DataError(f"config line {line_no}: bad value {text!r} for key {key!r}") from None


def parse_config(path: str | Path) -> TrainConfig:
    """Read a flat ``key=value`` config file into a TrainConfig.

    Keys are kebab-case field names; blank lines and ``#`` comments are
    ignored.  Unknown keys and unparsable values raise DataError with the
    line number.
    """
    known = {f.name.replace("_", "-") for f in dataclasses.fields(TrainConfig)}
    overrides: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise DataError(f"config line {line_no}: expected key=value, got {text!r}")
            key, _, raw = text.partition("=")
            key = key.strip()
            if key not in known:
                raise DataError(f"config line {line_no}: unknown key {key!r}")
            overrides[key.replace("-", "_")] = _parse_value(key, raw, line_no)
    config = TrainConfig(**overrides)
    config.validate()
    return config


def serialize_config(config: TrainConfig) -> str:
    """Render a config as the same key=value format parse_config reads."""
    lines = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(config, f.name)
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{f.name.replace('_', '-')}={text}")
    return "\n".join(lines) + "\n"


def write_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(config), encoding="utf-8")


# ---------------------------------------------------------------------------
# Model construction


def build_tables(
    records: Sequence[DatasetRecord], config: TrainConfig
) -> tuple[WordEmbeddingTable, PatternEmbeddingTable]:
    """Build word and pattern tables from the training split only."""
    word_table = build_vocab(
        records,
        min_count=config.min_count,
        dim=config.word_dim,
        seed=config.seed,
    )
    pattern_table = PatternEmbeddingTable.build(records, dim=config.pattern_dim, seed=config.seed)
    return word_table, pattern_table


def build_model(
    kind: str,
    config: TrainConfig,
    word_table: WordEmbeddingTable,
    pattern_table: Optional[PatternEmbeddingTable] = None,
):
    """Construct one of the three trainable models from a config."""
    if kind == MODEL_POSHAN:
        if pattern_table is None:
            raise ValueError("the hierarchical model requires a pattern table")
        return PoshanModel(
            word_table,
            pattern_table,
            hidden_size=config.hidden_size,
            attention_size=config.attention_size,
            cell=config.cell,
            disable_pattern_att=config.disable_pattern_att,
            disable_phrase_att=config.disable_phrase_att,
            replace_headline_att=config.replace_headline_att,
            seed=config.seed,
        )
    if kind == MODEL_LSTM:
        return LstmConcatModel(word_table, hidden_size=config.hidden_size, cell=config.cell, seed=config.seed)
    if kind == MODEL_POSAT:
        return PosAtModel(
            word_table,
            hidden_size=config.hidden_size,
            cell=config.cell,
            init_mode=INIT_NEAR_ZERO,
            seed=config.seed,
        )
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


# ---------------------------------------------------------------------------
# Batching


def make_batches(
    records: Sequence[DatasetRecord],
    config: TrainConfig,
    seed: Optional[int] = None,
) -> list[list[PaddedRecord]]:
    """Truncate, pad, and group records into batches.

    With a seed the record order is shuffled reproducibly first; without
    one the input order is kept.  The final batch may be short: 300
    records at batch size 128 yield batches of 128, 128, and 44.
    """
    order = list(range(len(records)))
    if seed is not None:
        rng = np.random.default_rng(seed)
        order = [int(i) for i in rng.permutation(len(records))]
    padded = [
        pad_record(records[i], max_words=config.max_words_per_sentence, max_sentences=config.max_sentences)
        for i in order
    ]
    return [padded[i : i + config.batch_size] for i in range(0, len(padded), config.batch_size)]


# ---------------------------------------------------------------------------
# Optimization


def clip_global_norm(grads: dict[str, np.ndarray], threshold: float) -> dict[str, np.ndarray]:
    """Scale all gradients down so their joint L2 norm is at most threshold.

    The norm is taken over every entry of every array together; when it
    exceeds the threshold each array is multiplied by threshold / norm,
    e.g. gradients (8, 6) with threshold 6 become (4.8, 3.6).
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    norm = math.sqrt(total)
    if norm <= threshold or norm == 0.0:
        return {name: np.array(g, dtype=np.float64, copy=True) for name, g in grads.items()}
    scale = threshold / norm
    return {name: np.asarray(g, dtype=np.float64) * scale for name, g in grads.items()}


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(
        self,
        params: Sequence[Parameter],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = [p for p in params if p.trainable]
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p in self.params:
            g = grads.get(p.name)
            if g is None:
                continue
            m = self._m[p.name]
            v = self._v[p.name]
            m[...] = b1 * m + (1.0 - b1) * g
            v[...] = b2 * v + (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            p.data[...] = p.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class Checkpoint:
    """Everything needed to rebuild a trained model exactly.

    ``patterns`` and ``pattern_label_counts`` are None for the baseline
    models, which have no pattern table.
    """

    model_kind: str
    config: TrainConfig
    vocab: dict[str, int]
    word_mode: str
    patterns: Optional[dict[str, int]]
    pattern_label_counts: Optional[dict[str, list[int]]]
    params: dict[str, np.ndarray]
    best_epoch: int
    val_losses: list[float] = field(default_factory=list)


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    """Write a checkpoint in a deterministic binary format.

    Layout: magic line, a little-endian uint32 header length, a JSON
    header with sorted keys, then each parameter's float64 bytes in
    header order.  Identical checkpoints produce identical files.
    """
    names = sorted(checkpoint.params)
    header = {
        "model-kind": checkpoint.model_kind,
        "config": dataclasses.asdict(checkpoint.config),
        "vocab": checkpoint.vocab,
        "word-mode": checkpoint.word_mode,
        "patterns": checkpoint.patterns,
        "pattern-label-counts": checkpoint.pattern_label_counts,
        "best-epoch": checkpoint.best_epoch,
        "val-losses": [repr(v) for v in checkpoint.val_losses],
        "params": [
            {"name": name, "shape": list(checkpoint.params[name].shape)} for name in names
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buffer = io.BytesIO()
    buffer.write(CHECKPOINT_MAGIC)
    buffer.write(struct.pack("<I", len(header_bytes)))
    buffer.write(header_bytes)
    for name in names:
        array = np.ascontiguousarray(checkpoint.params[name], dtype="<f8")
        buffer.write(array.tobytes())
    Path(path).write_bytes(buffer.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    if len(raw) < offset + 4:
        raise DataError(f"{path}: truncated checkpoint header")
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from None
    offset += header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * 8
        if end > len(raw):
            raise DataError(f"{path}: truncated parameter data for {entry['name']!r}")
        array = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape)
        params[entry["name"]] = np.array(array, dtype=np.float64)
        offset += count * 8
    config = TrainConfig(**header["config"])
    return Checkpoint(
        model_kind=header["model-kind"],
        config=config,
        vocab=header["vocab"],
        word_mode=header["word-mode"],
        patterns=header["patterns"],
        pattern_label_counts=header["pattern-label-counts"],
        params=params,
        best_epoch=header["best-epoch"],
        val_losses=[float(v) for v in header["val-losses"]],
    )


def _apply_params(model, stored: dict[str, np.ndarray]) -> None:
    for p in model.parameters():
        if p.name not in stored:
            raise DataError(f"checkpoint is missing parameter {p.name!r}")
        value = stored[p.name]
        if value.shape != p.data.shape:
            raise DataError(
                f"checkpoint parameter {p.name!r} has shape {value.shape}, expected {p.data.shape}"
            )
        p.data[...] = value


def model_from_checkpoint(checkpoint: Checkpoint):
    """Rebuild the trained model with its stored parameter values."""
    config = checkpoint.config
    word_matrix = checkpoint.params["word_embeddings"]
    word_param = Parameter(
        "word_embeddings", word_matrix.copy(), trainable=checkpoint.word_mode != MODE_PRELOADED_FROZEN
    )
    word_table = WordEmbeddingTable(dict(checkpoint.vocab), word_param, mode=checkpoint.word_mode)
    pattern_table = None
    if checkpoint.patterns is not None:
        pattern_param = Parameter("pattern_embeddings", checkpoint.params["pattern_embeddings"].copy())
        pattern_table = PatternEmbeddingTable(dict(checkpoint.patterns), pattern_param)
    model = build_model(checkpoint.model_kind, config, word_table, pattern_table)
    _apply_params(model, checkpoint.params)
    return model


def predict(checkpoint: Checkpoint, records: Sequence[DatasetRecord]) -> EvalReport:
    """Evaluate a stored model on records, using its training-time limits."""
    model = model_from_checkpoint(checkpoint)
    config = checkpoint.config
    return evaluate_model(
        model,
        records,
        max_words=config.max_words_per_sentence,
        max_sentences=config.max_sentences,
    )


# ---------------------------------------------------------------------------
# Splitting


def _split_key(record_id: str, seed: int) -> str:
    return hashlib.sha256(f"{seed}:{record_id}".encode("utf-8")).hexdigest()


def stratified_split(
    records: Sequence[DatasetRecord],
    seed: int,
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
) -> tuple[list[DatasetRecord], list[DatasetRecord], list[DatasetRecord]]:
    """Split records into train/val/test, stratified by label.

    Within each label the order is fixed by a seeded hash of the record
    id, so membership depends only on (ids, labels, seed) and not on the
    input order.
    """
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"split fractions must sum to 1, got {fractions}")
    train: list[DatasetRecord] = []
    val: list[DatasetRecord] = []
    test: list[DatasetRecord] = []
    by_label: dict[str, list[DatasetRecord]] = {}
    for record in records:
        by_label.setdefault(record.label, []).append(record)
    for label in sorted(by_label):
        bucket = sorted(by_label[label], key=lambda r: _split_key(r.id, seed))
        n = len(bucket)
        n_train = int(n * fractions[0])
        n_val = int(n * fractions[1])
        train.extend(bucket[:n_train])
        val.extend(bucket[n_train : n_train + n_val])
        test.extend(bucket[n_train + n_val :])
    return train, val, test


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log_lines: list[str]
    epochs_run: int
    stopped_early: bool


LOG_HEADER = "epoch\ttrain-loss\tval-loss\tval-macro-f1"


def _mean_val_loss(model, val_padded: Sequence[PaddedRecord]) -> float:
    total = 0.0
    for padded in val_padded:
        total += float(model.loss(padded, query_mode=MEAN_POOL).data)
    return total / len(val_padded)


def train(
    config: TrainConfig,
    train_records: Sequence[DatasetRecord],
    val_records: Sequence[DatasetRecord],
    model_kind: str = MODEL_POSHAN,
    log_path: Optional[str | Path] = None,
) -> TrainResult:
    """Train a model with Adam, clipping, and early stopping.

    Training loss is the mean over records; gradients are accumulated
    per record in a fixed order, averaged over the batch, clipped by
    global norm, then applied.  The run stops once validation loss has
    not improved by more than 1e-4 for ``early_stop_patience`` epochs,
    and the returned checkpoint holds the best-validation parameters.
    """
    config.validate()
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}; expected one of {MODEL_KINDS}")
    if not train_records:
        raise DataError("training split is empty")
    if not val_records:
        raise DataError("validation split is empty")

    word_table, pattern_table = build_tables(train_records, config)
    model = build_model(model_kind, config, word_table, pattern_table)
    params = model.parameters()
    trainable = model.trainable_parameters()
    optimizer = Adam(trainable, learning_rate=config.learning_rate)

    if model_kind == MODEL_POSHAN:
        train_units: list[DatasetRecord] = []
        for record in train_records:
            train_units.extend(replicate_for_training(record))
        query_mode = ACTIVE
    else:
        train_units = list(train_records)
        query_mode = MEAN_POOL

    val_padded = [
        pad_record(r, max_words=config.max_words_per_sentence, max_sentences=config.max_sentences)
        for r in val_records
    ]

    log_lines = [LOG_HEADER]
    best_val = math.inf
    best_epoch = -1
    best_params: dict[str, np.ndarray] = {}
    val_losses: list[float] = []
    epochs_without_improvement = 0
    stopped_early = False
    epochs_run = 0

    for epoch in range(config.max_epochs):
        batches = make_batches(train_units, config, seed=config.seed + epoch)
        epoch_total = 0.0
        for batch_index, batch in enumerate(batches):
            zero_gradients(params)
            batch_total = 0.0
            for padded in batch:
                loss = model.loss(padded, query_mode=query_mode)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise NonFiniteError(
                        f"non-finite loss at epoch {epoch} batch {batch_index}; aborting"
                    )
                backward(loss, ())
                batch_total += value
            grads = collect_gradients(trainable)
            inv = 1.0 / len(batch)
            mean_grads = {name: g * inv for name, g in grads.items()}
            clipped = clip_global_norm(mean_grads, config.grad_clip)
            optimizer.step(clipped)
            epoch_total += batch_total
        train_loss = epoch_total / len(train_units)

        val_loss = _mean_val_loss(model, val_padded)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report = evaluate_model(
                model,
                val_records,
                max_words=config.max_words_per_sentence,
                max_sentences=config.max_sentences,
            )
        val_losses.append(val_loss)
        log_lines.append(f"{epoch}\t{train_loss!r}\t{val_loss!r}\t{report.macro_f1!r}")
        epochs_run = epoch + 1

        if best_val - val_loss > IMPROVEMENT_THRESHOLD:
            best_val = val_loss
            best_epoch = epoch
            best_params = {p.name: p.data.copy() for p in params}
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= config.early_stop_patience:
                stopped_early = True
                break

    if best_epoch < 0:
        best_epoch = epochs_run - 1
        best_params = {p.name: p.data.copy() for p in params}
    for p in params:
        p.data[...] = best_params[p.name]

    checkpoint = Checkpoint(
        model_kind=model_kind,
        config=config,
        vocab=dict(word_table.vocab),
        word_mode=word_table.mode,
        patterns=dict(pattern_table.patterns) if model_kind == MODEL_POSHAN else None,
        pattern_label_counts=(
            {k: list(v) for k, v in pattern_label_counts(train_records).items()}
            if model_kind == MODEL_POSHAN
            else None
        ),
        params={p.name: p.data.copy() for p in params},
        best_epoch=best_epoch,
        val_losses=val_losses,
    )
    if log_path is not None:
        Path(log_path).write_text("\n".join(log_lines) + "\n", encoding="utf-8")
    return TrainResult(
        checkpoint=checkpoint,
        log_lines=log_lines,
        epochs_run=epochs_run,
        stopped_early=stopped_early,
    )
