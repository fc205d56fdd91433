"""Training-sample difficulty heuristics on the first-stage ranking.

Each heuristic maps a sample to [0, 1]; 1 means easy, 0 means hard. The
per-document "base" value is the reciprocal rank, the min-max-normalized
score, or the Gaussian-KDE CDF of the score. Pointwise difficulty is the
base for relevant samples (grade > 0) and its complement otherwise;
pairwise difficulty is (base+ - base- + 1) / 2.

Documents absent from the ranking: under the default ``zero`` policy,
reciprocal rank and normalized score fall back to 0 (the rank -> inf
limit, resp. a below-minimum clamp); the KDE heuristic can instead score
them directly with BM25 when an index is supplied. Policy ``strict``
raises instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .first_stage import BM25Params, InvertedIndex, analyze, bm25_score
from .trec_io import PairwiseSample, PointwiseSample, Query, RunList, TrainingSample

HEURISTICS = ("recip", "norm", "kde", "one")
LOSS_MODES = ("pointwise", "pairwise")
POLICIES = ("zero", "strict")

_KDE_ZERO_SPREAD_SCALE = 1e-3


@dataclass(frozen=True)
class DifficultyConfig:
    heuristic: str
    loss_mode: str
    anti: bool = False
    unretrieved_policy: str = "zero"

    def __post_init__(self):
        if self.heuristic not in HEURISTICS:
            raise ConfigError(f"unknown heuristic {self.heuristic!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}")
        if self.unretrieved_policy not in POLICIES:
            raise ConfigError(f"unknown unretrieved policy {self.unretrieved_policy!r}")


@dataclass(frozen=True)
class KdeModel:
    sample_points: np.ndarray
    bandwidth: float


def recip(run_list: RunList, doc_id: str, policy: str = "zero") -> float:
    """Reciprocal rank of ``doc_id``; absent docs are 0 under ``zero``."""
    entry = run_list.entry(doc_id)
    if entry is None:
        if policy == "strict":
            raise DataError(f"{doc_id!r} not in ranking for {run_list.query_id!r}")
        return 0.0
    return 1.0 / entry.rank


def norm_score(run_list: RunList, doc_id: str, policy: str = "zero") -> float:
    """Min-max-normalized score over the run list; all-equal scores give 0.5."""
    if not run_list.entries:
        raise DataError(f"empty run list for {run_list.query_id!r}")
    entry = run_list.entry(doc_id)
    if entry is None:
        if policy == "strict":
            raise DataError(f"{doc_id!r} not in ranking for {run_list.query_id!r}")
        return 0.0
    high = run_list.entries[0].score
    low = run_list.entries[-1].score
    if high == low:
        return 0.5
    return (entry.score - low) / (high - low)


def fit_kde(run_list: RunList | np.ndarray) -> KdeModel:
    """Gaussian KDE over the per-query scores, Scott's-rule bandwidth.

    Bandwidth is sigma * n^(-1/5) with the population standard deviation;
    an all-equal score list falls back to max(|mean|, 1) * 1e-3.
    """
    scores = (
        np.asarray(run_list.scores(), dtype=np.float64)
        if isinstance(run_list, RunList)
        else np.asarray(run_list, dtype=np.float64)
    )
    if scores.size == 0:
        raise DataError("cannot fit a KDE to an empty score list")
    sigma = float(scores.std())
    if sigma > 0.0:
        bandwidth = sigma * scores.size ** (-0.2)
    else:
        bandwidth = max(abs(float(scores.mean())), 1.0) * _KDE_ZERO_SPREAD_SCALE
    return KdeModel(sample_points=scores, bandwidth=bandwidth)


def kde_cdf(model: KdeModel, x) -> float | np.ndarray:
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    values = kernels.kde_cdf_many(model.sample_points, model.bandwidth, xs)
    return float(values[0]) if np.isscalar(x) or np.ndim(x) == 0 else values


def _pointwise(base: float, grade: int) -> float:
    return base if grade > 0 else 1.0 - base


def _pairwise(base_pos: float, base_neg: float) -> float:
    return (base_pos - base_neg + 1.0) / 2.0


def difficulty_pointwise_recip(run_list, doc_id, grade, policy="zero") -> float:
    return _pointwise(recip(run_list, doc_id, policy), grade)


def difficulty_pairwise_recip(run_list, pos_doc, neg_doc, policy="zero") -> float:
    return _pairwise(recip(run_list, pos_doc, policy), recip(run_list, neg_doc, policy))


def difficulty_pointwise_norm(run_list, doc_id, grade, policy="zero") -> float:
    return _pointwise(norm_score(run_list, doc_id, policy), grade)


def difficulty_pairwise_norm(run_list, pos_doc, neg_doc, policy="zero") -> float:
    return _pairwise(norm_score(run_list, pos_doc, policy), norm_score(run_list, neg_doc, policy))


def _kde_base(run_list, doc_id, model=None, fallback_score=None) -> float:
    entry = run_list.entry(doc_id)
    if entry is not None:
        score = entry.score
    elif fallback_score is not None:
        score = fallback_score
    else:
        raise DataError(
            f"{doc_id!r} not in ranking for {run_list.query_id!r} and no score source given"
        )
    if model is None:
        model = fit_kde(run_list)
    return float(kde_cdf(model, score))


def difficulty_pointwise_kde(run_list, doc_id, grade, model=None, fallback_score=None) -> float:
    return _pointwise(_kde_base(run_list, doc_id, model, fallback_score), grade)


def difficulty_pairwise_kde(
    run_list, pos_doc, neg_doc, model=None, pos_fallback=None, neg_fallback=None
) -> float:
    return _pairwise(
        _kde_base(run_list, pos_doc, model, pos_fallback),
        _kde_base(run_list, neg_doc, model, neg_fallback),
    )


def anti(value: float) -> float:
    """The anti-curriculum transform 1 - D; input must be in [0, 1]."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"difficulty value {value} outside [0, 1]")
    return 1.0 - value


class DifficultyScorer:
    """Computes the configured heuristic for training samples.

    Per-document base values are cached per query. When the KDE heuristic
    is configured with an index (plus BM25 params and query texts),
    documents missing from the ranking are scored directly with BM25, so
    unretrieved positives still receive a non-zero difficulty.
    """

    def __init__(
        self,
        config: DifficultyConfig,
        run_lists: dict[str, RunList],
        index: InvertedIndex | None = None,
        params: BM25Params | None = None,
        queries: dict[str, Query] | None = None,
    ):
        self.config = config
        self.run_lists = run_lists
        self._index = index
        self._params = params or BM25Params()
        self._queries = queries
        self._kde_models: dict[str, KdeModel] = {}
        self._base_cache: dict[tuple[str, str], float] = {}
        self._query_terms: dict[str, list[str]] = {}

    def _run(self, query_id: str) -> RunList:
        try:
            return self.run_lists[query_id]
        except KeyError:
            raise DataError(f"no first-stage ranking for query {query_id!r}") from None

    def _fallback_score(self, query_id: str, doc_id: str) -> float | None:
        if self._index is None:
            return None
        if self._queries is None or query_id not in self._queries:
            raise DataError(f"no query text for {query_id!r}; cannot BM25-score {doc_id!r}")
        terms = self._query_terms.get(query_id)
        if terms is None:
            terms = analyze(self._queries[query_id].text, self._index.analyzer)
            self._query_terms[query_id] = terms
        return bm25_score(self._index, self._params, terms, doc_id)

    def base(self, query_id: str, doc_id: str) -> float:
        """Per-document base value in [0, 1] for the configured heuristic."""
        key = (query_id, doc_id)
        cached = self._base_cache.get(key)
        if cached is not None:
            return cached
        heuristic = self.config.heuristic
        if heuristic == "one":
            value = 1.0
        elif heuristic == "recip":
            value = recip(self._run(query_id), doc_id, self.config.unretrieved_policy)
        elif heuristic == "norm":
            value = norm_score(self._run(query_id), doc_id, self.config.unretrieved_policy)
        else:
            run = self._run(query_id)
            model = self._kde_models.get(query_id)
            if model is None:
                model = fit_kde(run)
                self._kde_models[query_id] = model
            fallback = None
            if run.entry(doc_id) is None:
                if self.config.unretrieved_policy == "strict":
                    raise DataError(f"{doc_id!r} not in ranking for {query_id!r}")
                fallback = self._fallback_score(query_id, doc_id)
            value = _kde_base(run, doc_id, model, fallback)
        self._base_cache[key] = value
        return value

    def pointwise(self, query_id: str, doc_id: str, grade: int) -> float:
        if self.config.heuristic == "one":
            return 1.0  # the constant heuristic marks every sample easy
        return _pointwise(self.base(query_id, doc_id), grade)

    def pairwise(self, query_id: str, pos_doc: str, neg_doc: str) -> float:
        if self.config.heuristic == "one":
            return 1.0
        return _pairwise(self.base(query_id, pos_doc), self.base(query_id, neg_doc))

    def __call__(self, sample: TrainingSample) -> float:
        if isinstance(sample, PointwiseSample):
            if self.config.loss_mode != "pointwise":
                raise DataError("pointwise sample given to a pairwise difficulty config")
            value = self.pointwise(sample.query_id, sample.doc_id, sample.grade)
        elif isinstance(sample, PairwiseSample):
            if self.config.loss_mode != "pairwise":
                raise DataError("pairwise sample given to a pointwise difficulty config")
            value = self.pairwise(sample.query_id, sample.pos_doc_id, sample.neg_doc_id)
        else:
            raise DataError(f"unknown training sample type {type(sample).__name__}")
        return anti(value) if self.config.anti else value


def export_weights(samples: list[TrainingSample], values: list[float], path) -> None:
    """Write a difficulty sidecar TSV: ``qid<TAB>doc_or_pair<TAB>difficulty``.

    Pairwise samples encode the pair as ``pos_docid|neg_docid``.
    """
    if len(samples) != len(values):
        raise DataError("samples and difficulty values differ in length")
    with open(path, "w", encoding="utf-8") as handle:
        for sample, value in zip(samples, values):
            if isinstance(sample, PairwiseSample):
                ref = f"{sample.pos_doc_id}|{sample.neg_doc_id}"
            else:
                ref = sample.doc_id
            handle.write(f"{sample.query_id}\t{ref}\t{value:.6f}\n")


def compute_weights(
    config: DifficultyConfig,
    samples: list[TrainingSample],
    run_lists: dict[str, RunList],
    index: InvertedIndex | None = None,
    params: BM25Params | None = None,
    queries: dict[str, Query] | None = None,
) -> list[float]:
    scorer = DifficultyScorer(config, run_lists, index=index, params=params, queries=queries)
    return [scorer(sample) for sample in samples]
