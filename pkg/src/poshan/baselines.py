"""The two self-contained baselines: a Bi-LSTM over the concatenated
headline and body token sequence, and the POS-category-guided attention
variant that scales each word embedding by a learned per-category weight
before encoding.
"""

from __future__ import annotations

import math

import numpy as np

from .attention import PaddedRecord
from .embeddings import MEAN_POOL, WordEmbeddingTable
from .encoder import CELL_LSTM_BI, SequenceEncoder
from .grad import (
    Parameter,
    ShapeError,
    Tensor,
    affine,
    constant,
    relu_elem,
    scalar_scale,
    softmax_cross_entropy_with_logits,
    softmax_probs,
)
from .model import ClassifierHead
from .text import DatasetRecord, label_index

# dimensions reported for the concat baseline's reference configuration
DEFAULT_EMBED_DIM = 100
DEFAULT_HIDDEN = 200

POS_CATEGORIES = ("noun", "verb", "adjective", "pronoun", "adverb",
                  "cardinal", "other")
OTHER_CATEGORY = len(POS_CATEGORIES) - 1

_CATEGORY_TAGS = {
    "noun": frozenset({"NN", "NNS", "NNP", "NNPS"}),
    "verb": frozenset({"VB", "VBD", "VBG", "VBN", "VBP", "VBZ"}),
    "adjective": frozenset({"JJ", "JJR", "JJS"}),
    "pronoun": frozenset({"WP"}),
    "adverb": frozenset({"WRB"}),
    "cardinal": frozenset({"CD"}),
}

INIT_NEAR_ZERO = "near-zero"
INIT_RANDOM = "random"


def pos_category_index(tag: str) -> int:
    """Total map from a POS tag to one of the seven category indices."""
    for i, cat in enumerate(POS_CATEGORIES[:-1]):
        if tag in _CATEGORY_TAGS[cat]:
            return i
    return OTHER_CATEGORY


def flatten_record(record: DatasetRecord, max_words=None,
                   max_sentences=None) -> list:
    """Headline tokens followed by body tokens, truncated to the limits."""
    tagged = list(record.headline)
    sentences = record.sentences
    if max_sentences is not None:
        sentences = sentences[:max_sentences]
    for sent in sentences:
        tagged.extend(sent if max_words is None else sent[:max_words])
    return tagged


class LstmConcatModel:
    """Single bidirectional encoder over [headline || body]; the final
    encoder state feeds the classifier head."""

    kind = "lstm"

    def __init__(self, word_table: WordEmbeddingTable,
                 hidden_size: int = DEFAULT_HIDDEN, cell: str = CELL_LSTM_BI,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.word_table = word_table
        self.encoder = SequenceEncoder("concat_enc", in_dim=word_table.dim,
                                       hidden=hidden_size, cell=cell, rng=rng)
        self.head = ClassifierHead("classifier", self.encoder.out_dim, rng)

    def _inputs(self, tagged) -> list:
        return [self.word_table.lookup(t.text) for t in tagged]

    def forward(self, padded: PaddedRecord) -> Tensor:
        tagged = flatten_record(padded.record, padded.max_words,
                                padded.max_sentences)
        inputs = self._inputs(tagged)
        final = self.encoder.final_state(inputs, [True] * len(inputs))
        return self.head.logits(final)

    def loss(self, padded: PaddedRecord, query_mode: str = MEAN_POOL) -> Tensor:
        return softmax_cross_entropy_with_logits(
            self.forward(padded), label_index(padded.record.label))

    def predict_probs(self, padded: PaddedRecord) -> np.ndarray:
        return softmax_probs(self.forward(padded))

    def parameters(self) -> list:
        return [self.word_table.matrix, *self.encoder.parameters(),
                *self.head.parameters()]

    def trainable_parameters(self) -> list:
        return [p for p in self.parameters() if p.trainable]


class PosAtModel:
    """Concat encoder whose word embeddings are scaled by a learned
    scalar per POS category before encoding.

    Each category weight is a one-unit rectified-linear dense over the
    one-hot category vector; near-zero initialization draws from
    [0, 0.01].
    """

    kind = "posat"

    def __init__(self, word_table: WordEmbeddingTable,
                 hidden_size: int = DEFAULT_HIDDEN, cell: str = CELL_LSTM_BI,
                 init_mode: str = INIT_NEAR_ZERO, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.word_table = word_table
        self.encoder = SequenceEncoder("concat_enc", in_dim=word_table.dim,
                                       hidden=hidden_size, cell=cell, rng=rng)
        self.head = ClassifierHead("classifier", self.encoder.out_dim, rng)
        n = len(POS_CATEGORIES)
        if init_mode == INIT_NEAR_ZERO:
            w = rng.uniform(0.0, 0.01, (1, n))
        elif init_mode == INIT_RANDOM:
            bound = 1.0 / math.sqrt(n)
            w = rng.uniform(-bound, bound, (1, n))
        else:
            raise ValueError(f"unknown init mode {init_mode!r}")
        self.theta_weight = Parameter("posat.theta_w", w)
        self.theta_bias = Parameter("posat.theta_b", np.zeros(1))

    def category_theta(self, tag: str) -> Tensor:
        onehot = np.zeros(len(POS_CATEGORIES))
        onehot[pos_category_index(tag)] = 1.0
        return relu_elem(affine(constant(onehot), self.theta_weight.value,
                                self.theta_bias.value))

    def scaled_inputs(self, tokens, tags) -> list:
        if len(tokens) != len(tags):
            raise ShapeError(
                f"{len(tokens)} tokens vs {len(tags)} tags")
        return [scalar_scale(self.word_table.lookup(tok),
                             self.category_theta(tag))
                for tok, tag in zip(tokens, tags)]

    def forward_sequence(self, tokens, tags) -> Tensor:
        inputs = self.scaled_inputs(tokens, tags)
        final = self.encoder.final_state(inputs, [True] * len(inputs))
        return self.head.logits(final)

    def forward(self, padded: PaddedRecord) -> Tensor:
        tagged = flatten_record(padded.record, padded.max_words,
                                padded.max_sentences)
        return self.forward_sequence([t.text for t in tagged],
                                     [t.pos for t in tagged])

    def loss(self, padded: PaddedRecord, query_mode: str = MEAN_POOL) -> Tensor:
        return softmax_cross_entropy_with_logits(
            self.forward(padded), label_index(padded.record.label))

    def predict_probs(self, padded: PaddedRecord) -> np.ndarray:
        return softmax_probs(self.forward(padded))

    def parameters(self) -> list:
        return [self.word_table.matrix, *self.encoder.parameters(),
                *self.head.parameters(), self.theta_weight, self.theta_bias]

    def trainable_parameters(self) -> list:
        return [p for p in self.parameters() if p.trainable]
