"""A small differentiable scorer over fixed query-document features.

Features (in order): BM25 score, query coverage (fraction of distinct
query terms present in the document), idf-weighted term overlap,
log(1 + document length), and the count of distinct query bigrams that
appear verbatim in the document. Features are standardized with
train-split mean/stddev fitted once per dataset.

The scorer is a one-hidden-layer tanh network, score = w2.tanh(W1 x +
b1) + b2, held as a single flat float64 parameter vector (layout in
``currank.kernels``). Optimization is Adam with beta1=0.9, beta2=0.999,
eps=1e-8. All hot paths go through the kernel backend.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import log, sqrt

import numpy as np

from . import kernels
from .errors import DataError
from .first_stage import BM25Params, InvertedIndex, analyze, bm25_score
from .trec_io import Document, Query

FEATURE_NAMES = (
    "bm25_score",
    "query_coverage",
    "idf_weighted_overlap",
    "log_doc_length",
    "exact_bigram_match_count",
)

NUM_FEATURES = len(FEATURE_NAMES)

_MODEL_MAGIC = b"CRNKMD01"


class FeatureExtractor:
    """Deterministic feature computation plus per-dataset standardization."""

    def __init__(
        self,
        index: InvertedIndex,
        params: BM25Params,
        corpus: dict[str, Document],
    ):
        self._index = index
        self._params = params
        self._corpus = corpus
        self._doc_tokens: dict[str, list[str]] = {}
        self._query_tokens: dict[str, list[str]] = {}
        self._raw_cache: dict[tuple[str, str], np.ndarray] = {}
        self.mean: np.ndarray | None = None
        self.std: np.ndarray | None = None

    def _tokens_for_doc(self, doc_id: str) -> list[str]:
        tokens = self._doc_tokens.get(doc_id)
        if tokens is None:
            try:
                doc = self._corpus[doc_id]
            except KeyError:
                raise DataError(f"unknown document {doc_id!r}") from None
            tokens = analyze(doc.text, self._index.analyzer)
            self._doc_tokens[doc_id] = tokens
        return tokens

    def _tokens_for_query(self, query: Query) -> list[str]:
        tokens = self._query_tokens.get(query.query_id)
        if tokens is None:
            tokens = analyze(query.text, self._index.analyzer)
            self._query_tokens[query.query_id] = tokens
        return tokens

    def raw(self, query: Query, doc_id: str) -> np.ndarray:
        """Unstandardized feature vector for one (query, document) pair."""
        cached = self._raw_cache.get((query.query_id, doc_id))
        if cached is not None:
            return cached
        q_tokens = self._tokens_for_query(query)
        d_tokens = self._tokens_for_doc(doc_id)
        d_set = set(d_tokens)
        q_distinct = sorted(set(q_tokens))
        matched = [t for t in q_distinct if t in d_set]

        bm25 = bm25_score(self._index, self._params, q_tokens, doc_id)
        coverage = len(matched) / len(q_distinct) if q_distinct else 0.0
        idf_total = sum(self._index.idf(t) for t in q_distinct)
        idf_matched = sum(self._index.idf(t) for t in matched)
        idf_overlap = idf_matched / idf_total if idf_total > 0 else 0.0
        log_len = log(1.0 + len(d_tokens))
        q_bigrams = {(q_tokens[i], q_tokens[i + 1]) for i in range(len(q_tokens) - 1)}
        d_bigrams = {(d_tokens[i], d_tokens[i + 1]) for i in range(len(d_tokens) - 1)}
        bigram_matches = float(len(q_bigrams & d_bigrams))
        features = np.array([bm25, coverage, idf_overlap, log_len, bigram_matches])
        self._raw_cache[(query.query_id, doc_id)] = features
        return features

    def fit(self, pairs: list[tuple[Query, str]]) -> "FeatureExtractor":
        """Fit the standardizer on train-split (query, doc_id) pairs."""
        if not pairs:
            raise DataError("cannot fit a feature standardizer on zero pairs")
        raw = np.stack([self.raw(q, d) for q, d in pairs])
        self.mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        std[std < 1e-12] = 1.0  # constant features pass through unscaled
        self.std = std
        return self

    def featurize(self, query: Query, doc_id: str) -> np.ndarray:
        if self.mean is None:
            raise DataError("feature standardizer not fitted")
        return (self.raw(query, doc_id) - self.mean) / self.std

    def featurize_many(self, pairs: list[tuple[Query, str]]) -> np.ndarray:
        if self.mean is None:
            raise DataError("feature standardizer not fitted")
        if not pairs:
            return np.zeros((0, NUM_FEATURES))
        raw = np.stack([self.raw(q, d) for q, d in pairs])
        return (raw - self.mean) / self.std


class RankerModel:
    """Flat parameter vector plus its dimensions and initialization seed."""

    def __init__(self, in_dim: int, hidden: int, seed: int, theta: np.ndarray):
        expected = (in_dim + 1) * hidden + hidden + 1
        if theta.shape != (expected,):
            raise DataError(
                f"parameter vector has {theta.shape[0]} entries, expected {expected}"
            )
        if not np.all(np.isfinite(theta)):
            raise DataError("non-finite model parameters")
        self.in_dim = in_dim
        self.hidden = hidden
        self.seed = seed
        self.theta = theta.astype(np.float64)

    @classmethod
    def init(cls, in_dim: int, hidden: int = 16, seed: int = 0) -> "RankerModel":
        """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
        rng = np.random.default_rng(seed)
        bound1 = 1.0 / sqrt(in_dim)
        bound2 = 1.0 / sqrt(hidden)
        theta = np.concatenate(
            [
                rng.uniform(-bound1, bound1, size=hidden * in_dim),
                rng.uniform(-bound1, bound1, size=hidden),
                rng.uniform(-bound2, bound2, size=hidden),
                rng.uniform(-bound2, bound2, size=1),
            ]
        )
        return cls(in_dim, hidden, seed, theta)

    @property
    def num_parameters(self) -> int:
        return self.theta.shape[0]

    def copy(self) -> "RankerModel":
        return RankerModel(self.in_dim, self.hidden, self.seed, self.theta.copy())

    def score(self, x: np.ndarray) -> float:
        return float(self.score_batch(np.asarray(x, dtype=np.float64)[None, :])[0])

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DataError(f"feature matrix shape {x.shape} does not match in_dim {self.in_dim}")
        if x.shape[0] == 0:
            return np.zeros(0)
        return kernels.mlp_scores(self.theta, self.in_dim, self.hidden, x)

    def save(self, path) -> None:
        with open(path, "wb") as handle:
            handle.write(_MODEL_MAGIC)
            handle.write(struct.pack("<IIq", self.in_dim, self.hidden, self.seed))
            handle.write(struct.pack("<Q", self.theta.shape[0]))
            handle.write(self.theta.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "RankerModel":
        with open(path, "rb") as handle:
            magic = handle.read(len(_MODEL_MAGIC))
            if magic != _MODEL_MAGIC:
                raise DataError(f"{path}: not a model checkpoint (bad header)")
            in_dim, hidden, seed = struct.unpack("<IIq", handle.read(16))
            (count,) = struct.unpack("<Q", handle.read(8))
            theta = np.frombuffer(handle.read(count * 8), dtype="<f8").astype(np.float64)
        return cls(in_dim, hidden, seed, theta)


def _as_batch(fv: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(fv, dtype=np.float64)[None, :])


def pointwise_loss_and_grad(model: RankerModel, fv: np.ndarray, s: float):
    """Squared error (s - score)^2 and its analytic parameter gradient."""
    loss, grad = kernels.pointwise_loss_grad(
        model.theta,
        model.in_dim,
        model.hidden,
        _as_batch(fv),
        np.array([float(s)]),
        np.ones(1),
    )
    return loss, grad


def pairwise_loss_and_grad(model: RankerModel, fv_pos: np.ndarray, fv_neg: np.ndarray):
    """Softmax cross-entropy -ln p(pos over neg) with analytic gradient."""
    loss, grad = kernels.pairwise_loss_grad(
        model.theta,
        model.in_dim,
        model.hidden,
        _as_batch(fv_pos),
        _as_batch(fv_neg),
        np.ones(1),
    )
    return loss, grad


def pointwise_batch_loss_grad(model, x, targets, weights):
    return kernels.pointwise_loss_grad(
        model.theta,
        model.in_dim,
        model.hidden,
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(targets, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


def pairwise_batch_loss_grad(model, x_pos, x_neg, weights):
    return kernels.pairwise_loss_grad(
        model.theta,
        model.in_dim,
        model.hidden,
        np.ascontiguousarray(x_pos, dtype=np.float64),
        np.ascontiguousarray(x_neg, dtype=np.float64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )


@dataclass
class AdamState:
    """First/second moment buffers and step counter for one model."""

    mom1: np.ndarray
    mom2: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: RankerModel) -> "AdamState":
        return cls(np.zeros_like(model.theta), np.zeros_like(model.theta))

    def copy(self) -> "AdamState":
        return AdamState(self.mom1.copy(), self.mom2.copy(), self.t, self.beta1, self.beta2, self.eps)


def adam_step(model: RankerModel, state: AdamState, grad: np.ndarray, lr: float) -> None:
    """One in-place Adam update. Rejects non-finite gradients."""
    if not np.all(np.isfinite(grad)):
        raise DataError("non-finite gradient; training diverged")
    state.t += 1
    kernels.adam_update(
        model.theta, grad, state.mom1, state.mom2, state.t, lr, state.beta1, state.beta2, state.eps
    )
    if not np.all(np.isfinite(model.theta)):
        raise DataError("non-finite parameters after optimizer step")
