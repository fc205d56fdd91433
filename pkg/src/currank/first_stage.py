"""Inverted-index BM25 retrieval: the unsupervised first stage.

The analyzer lowercases, splits on non-alphanumeric characters, and
optionally removes stopwords and applies Porter stemming. Both switches
default to on; the difficulty heuristics depend on these scores, so the
analyzer configuration should be pinned per experiment.

BM25 variant: Okapi with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
and the usual tf saturation / length normalization. Defaults k1=0.9,
b=0.4.
"""

from __future__ import annotations

import pickle
import re
from dataclasses import dataclass, field
from math import log

import numpy as np

from . import kernels, porter
from .errors import ConfigError, DataError
from .trec_io import Document, Qrels, Query, RunList

# Classic minimal English stopword list (33 words).
STOPWORDS = frozenset(
    "a an and are as at be but by for if in into is it no not of on or such "
    "that the their then there these they this to was will with".split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")

_INDEX_MAGIC = b"CRNKIX01"
_CHECKPOINT_HEADER_LEN = len(_INDEX_MAGIC)


@dataclass(frozen=True)
class AnalyzerConfig:
    stem: bool = True
    stopwords: bool = True


def analyze(text: str, config: AnalyzerConfig) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    if config.stopwords:
        tokens = [t for t in tokens if t not in STOPWORDS]
    if config.stem:
        tokens = [porter.stem(t) for t in tokens]
    return tokens


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise ConfigError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError(f"b must be in [0, 1], got {self.b}")


@dataclass
class InvertedIndex:
    """Immutable after build; scoring and retrieval are read-only."""

    doc_ids: list[str]
    doc_index: dict[str, int]
    postings: dict[str, tuple[np.ndarray, np.ndarray]]  # term -> (int64 ids, f8 tfs)
    doc_lengths: np.ndarray
    avg_doc_length: float
    analyzer: AnalyzerConfig
    _norm_cache: dict[tuple[float, float], np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def doc_count(self) -> int:
        return len(self.doc_ids)

    @property
    def vocabulary(self):
        return self.postings.keys()

    def doc_length(self, doc_id: str) -> int:
        return int(self.doc_lengths[self._internal(doc_id)])

    def df(self, term: str) -> int:
        entry = self.postings.get(term)
        return 0 if entry is None else len(entry[0])

    def tf(self, term: str, doc_id: str) -> int:
        entry = self.postings.get(term)
        if entry is None:
            return 0
        ids, tfs = entry
        pos = np.searchsorted(ids, self._internal(doc_id))
        if pos < len(ids) and ids[pos] == self._internal(doc_id):
            return int(tfs[pos])
        return 0

    def idf(self, term: str) -> float:
        df = self.df(term)
        n = self.doc_count
        return log(1.0 + (n - df + 0.5) / (df + 0.5))

    def _internal(self, doc_id: str) -> int:
        try:
            return self.doc_index[doc_id]
        except KeyError:
            raise DataError(f"unknown document {doc_id!r}") from None

    def length_norms(self, params: BM25Params) -> np.ndarray:
        """Per-document 1 - b + b * len/avg_len, cached per (k1, b)."""
        key = (params.k1, params.b)
        norm = self._norm_cache.get(key)
        if norm is None:
            norm = 1.0 - params.b + params.b * self.doc_lengths / self.avg_doc_length
            self._norm_cache[key] = norm
        return norm


def build_index(corpus: dict[str, Document | str], analyzer_config: AnalyzerConfig) -> InvertedIndex:
    if not corpus:
        raise DataError("cannot index an empty corpus")
    doc_ids: list[str] = []
    lengths: list[int] = []
    acc: dict[str, list[tuple[int, int]]] = {}
    for doc_id, doc in corpus.items():
        text = doc.text if isinstance(doc, Document) else doc
        internal = len(doc_ids)
        doc_ids.append(doc_id)
        tokens = analyze(text, analyzer_config)
        lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            acc.setdefault(term, []).append((internal, tf))
    postings = {
        term: (
            np.array([doc for doc, _ in pairs], dtype=np.int64),
            np.array([tf for _, tf in pairs], dtype=np.float64),
        )
        for term, pairs in acc.items()
    }
    doc_lengths = np.array(lengths, dtype=np.float64)
    return InvertedIndex(
        doc_ids=doc_ids,
        doc_index={doc_id: i for i, doc_id in enumerate(doc_ids)},
        postings=postings,
        doc_lengths=doc_lengths,
        avg_doc_length=float(doc_lengths.mean()),
        analyzer=analyzer_config,
    )


def bm25_score(
    index: InvertedIndex, params: BM25Params, query_terms: list[str], doc_id: str
) -> float:
    """Score one document for a list of (already analyzed) query terms.

    Repeated query terms contribute once per occurrence. Terms absent
    from the document (or corpus) contribute zero.
    """
    internal = index._internal(doc_id)
    norm = 1.0 - params.b + params.b * index.doc_lengths[internal] / index.avg_doc_length
    score = 0.0
    for term in query_terms:
        entry = index.postings.get(term)
        if entry is None:
            continue
        ids, tfs = entry
        pos = int(np.searchsorted(ids, internal))
        if pos >= len(ids) or ids[pos] != internal:
            continue
        tf = tfs[pos]
        idf = log(1.0 + (index.doc_count - len(ids) + 0.5) / (len(ids) + 0.5))
        score += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm)
    return score


def retrieve(index: InvertedIndex, params: BM25Params, query: Query | str, k: int) -> RunList:
    """Top-k BM25 retrieval; ties broken by doc_id ascending.

    Only documents matching at least one query term are candidates, so
    fewer than ``k`` entries may be returned.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if isinstance(query, Query):
        query_id, text = query.query_id, query.text
    else:
        query_id, text = str(query), str(query)
    terms = analyze(text, index.analyzer)
    scores = np.zeros(index.doc_count, dtype=np.float64)
    norm = index.length_norms(params)
    for term in terms:
        entry = index.postings.get(term)
        if entry is None:
            continue
        ids, tfs = entry
        idf = log(1.0 + (index.doc_count - len(ids) + 0.5) / (len(ids) + 0.5))
        kernels.bm25_accumulate(scores, ids, tfs, idf, params.k1, norm)
    matched = np.flatnonzero(scores > 0.0)
    ranked = sorted(matched.tolist(), key=lambda i: (-scores[i], index.doc_ids[i]))[:k]
    return RunList.from_scores(query_id, [(index.doc_ids[i], float(scores[i])) for i in ranked])


def default_tuning_grid() -> list[BM25Params]:
    """k1 in [0.1, 4.0] step 0.1 crossed with b in [0.0, 1.0] step 0.05."""
    k1_values = [round(0.1 * i, 1) for i in range(1, 41)]
    b_values = [round(0.05 * i, 2) for i in range(0, 21)]
    return [BM25Params(k1, b) for k1 in k1_values for b in b_values]


def tune_bm25(
    index: InvertedIndex,
    queries: dict[str, Query] | list[Query],
    qrels: Qrels,
    metric_spec,
    grid: list[BM25Params],
    depth: int = 100,
) -> BM25Params:
    """Grid-search argmax of the metric; ties go to smaller k1, then smaller b."""
    from .evalmetrics import evaluate

    if not grid:
        raise ConfigError("empty BM25 tuning grid")
    query_list = list(queries.values()) if isinstance(queries, dict) else list(queries)
    if not query_list:
        raise DataError("no tuning queries")
    best_params = None
    best_value = -np.inf
    for params in sorted(grid, key=lambda p: (p.k1, p.b)):
        runs = {q.query_id: retrieve(index, params, q, depth) for q in query_list}
        value = evaluate(runs, qrels, metric_spec).mean
        if value > best_value:
            best_value = value
            best_params = params
    return best_params


def save_index(index: InvertedIndex, path) -> None:
    payload = {
        "version": 1,
        "doc_ids": index.doc_ids,
        "postings": index.postings,
        "doc_lengths": index.doc_lengths,
        "analyzer": (index.analyzer.stem, index.analyzer.stopwords),
    }
    with open(path, "wb") as handle:
        handle.write(_INDEX_MAGIC)
        pickle.dump(payload, handle, protocol=4)


def load_index(path) -> InvertedIndex:
    with open(path, "rb") as handle:
        magic = handle.read(_CHECKPOINT_HEADER_LEN)
        if magic != _INDEX_MAGIC:
            raise DataError(f"{path}: not an index file (bad header)")
        payload = pickle.load(handle)
    if payload.get("version") != 1:
        raise DataError(f"{path}: unsupported index version {payload.get('version')}")
    doc_lengths = payload["doc_lengths"]
    stem_flag, stop_flag = payload["analyzer"]
    return InvertedIndex(
        doc_ids=payload["doc_ids"],
        doc_index={doc_id: i for i, doc_id in enumerate(payload["doc_ids"])},
        postings=payload["postings"],
        doc_lengths=doc_lengths,
        avg_doc_length=float(doc_lengths.mean()),
        analyzer=AnalyzerConfig(stem=stem_flag, stopwords=stop_flag),
    )
