"""Training loop: iterations of uniform batches, curriculum-weighted losses,
per-iteration validation with best-snapshot rollback, and early stopping.

One training iteration is ``batches_per_iteration`` batches of
``batch_size`` samples drawn uniformly with replacement from the
training pool. Per-sample losses are multiplied by the schedule weight
for the current iteration (constant within the iteration), averaged per
batch, and followed by one Adam step. The same RNG stream drives batch
selection regardless of the schedule, so runs that differ only in
weighting see the training data in the same order.

Early stopping tolerates ``patience`` consecutive non-improving
iterations and stops on the next one; the returned model is the
snapshot with the best validation value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .curriculum import CurriculumSchedule, weight_array
from .difficulty import DifficultyConfig, DifficultyScorer
from .errors import ConfigError, DataError
from .evalmetrics import MetricSpec, parse_metric
from .first_stage import AnalyzerConfig, BM25Params, InvertedIndex, build_index
from .ranker import (
    NUM_FEATURES,
    AdamState,
    FeatureExtractor,
    RankerModel,
    adam_step,
    pairwise_batch_loss_grad,
    pointwise_batch_loss_grad,
)
from .trec_io import (
    Dataset,
    PairwiseSample,
    PointwiseSample,
    Qrels,
    RunList,
    TrainingSample,
)

POOL_HEURISTICS = ("recip", "norm", "kde", "one")


@dataclass(frozen=True)
class TrainConfig:
    batches_per_iteration: int = 32
    batch_size: int = 16
    patience: int = 15
    max_iterations: int = 200
    learning_rate: float = 1e-3
    validation_metric: str = "mrr@10"
    relevance_threshold: int = 1
    rerank_depth: int = 100
    hidden: int = 16
    seed: int = 0
    loss_mode: str = "pairwise"
    sample_negatives_from_run: bool = False

    def __post_init__(self):
        for name in ("batches_per_iteration", "batch_size", "patience", "max_iterations",
                     "rerank_depth", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.loss_mode not in ("pointwise", "pairwise"):
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}")

    def metric_spec(self) -> MetricSpec:
        return parse_metric(self.validation_metric, self.relevance_threshold)


class EvalSet:
    """Re-ranking pools for one split, with fast metric evaluation.

    Candidates are the top ``rerank_depth`` entries of each stored run
    list; re-ranking sorts them by model score descending with ties kept
    in first-stage order.
    """

    def __init__(self, queries, run_lists: dict[str, RunList], qrels: Qrels,
                 extractor: FeatureExtractor, depth: int, threshold: int):
        self.query_ids = sorted(run_lists)
        self.qrels = qrels
        self.threshold = threshold
        self.doc_ids: list[list[str]] = []
        self.rel_masks: list[np.ndarray] = []
        self.n_relevant: list[int] = []
        feature_blocks = []
        offsets = [0]
        for qid in self.query_ids:
            docs = [e.doc_id for e in run_lists[qid].entries[:depth]]
            self.doc_ids.append(docs)
            relevant = qrels.relevant_docs(qid, threshold)
            self.rel_masks.append(np.array([d in relevant for d in docs], dtype=bool))
            self.n_relevant.append(len(relevant))
            feature_blocks.append(extractor.featurize_many([(queries[qid], d) for d in docs]))
            offsets.append(offsets[-1] + len(docs))
        self.features = (
            np.concatenate(feature_blocks) if feature_blocks else np.zeros((0, NUM_FEATURES))
        )
        self.offsets = np.array(offsets)

    def _scores(self, model: RankerModel) -> np.ndarray:
        return model.score_batch(self.features)

    def rerank(self, model: RankerModel) -> dict[str, RunList]:
        scores = self._scores(model)
        out = {}
        for qi, qid in enumerate(self.query_ids):
            lo, hi = self.offsets[qi], self.offsets[qi + 1]
            out[qid] = RunList.from_scores(
                qid, list(zip(self.doc_ids[qi], scores[lo:hi].tolist()))
            )
        return out

    def evaluate(self, model: RankerModel, spec: MetricSpec):
        """Metric over the re-ranked pools; matches ``evalmetrics.evaluate``."""
        scores = self._scores(model)
        per_query: dict[str, float] = {}
        averaged: list[float] = []
        for qi, qid in enumerate(self.query_ids):
            n_rel = self.n_relevant[qi]
            if n_rel == 0:
                if spec.kind in ("mrr", "p1"):
                    per_query[qid] = 0.0
                    averaged.append(0.0)
                continue
            lo, hi = self.offsets[qi], self.offsets[qi + 1]
            order = np.argsort(-scores[lo:hi], kind="stable")
            rel = self.rel_masks[qi][order]
            if spec.kind == "p1":
                value = 1.0 if rel.size and rel[0] else 0.0
            elif spec.kind == "mrr":
                depth = spec.k if spec.k is not None else rel.size
                hits = np.flatnonzero(rel[:depth])
                value = 1.0 / (hits[0] + 1.0) if hits.size else 0.0
            elif spec.kind == "map":
                hits = np.flatnonzero(rel)
                value = float(
                    np.sum((np.arange(hits.size) + 1.0) / (hits + 1.0)) / n_rel
                )
            else:  # rprec
                value = float(np.sum(rel[:n_rel]) / n_rel)
            per_query[qid] = value
            averaged.append(value)
        mean = float(np.mean(averaged)) if averaged else 0.0
        return per_query, mean


class _Batch:
    def __init__(self, pool, idx, neg_pick=None):
        self.pool = pool
        self.idx = idx
        self.neg_pick = neg_pick

    def difficulty(self, heuristic: str) -> np.ndarray:
        return self.pool.difficulty(self, heuristic)


class PointwisePool:
    """Fixed pool of judged (query, doc, grade) samples."""

    kind = "pointwise"

    def __init__(self, samples, x, grades, difficulties):
        self.samples = samples
        self.x = x
        self.targets = grades.astype(np.float64)
        self.grades = grades
        self._difficulties = difficulties  # heuristic -> (n,)

    def __len__(self):
        return len(self.samples)

    def draw(self, rng: np.random.Generator, batch_size: int) -> _Batch:
        return _Batch(self, rng.integers(0, len(self.samples), size=batch_size))

    def batch_arrays(self, batch: _Batch):
        return (self.x[batch.idx], self.targets[batch.idx])

    def difficulty(self, batch: _Batch, heuristic: str) -> np.ndarray:
        return self._difficulties[heuristic][batch.idx]

    def batch_samples(self, batch: _Batch) -> list[TrainingSample]:
        return [self.samples[i] for i in batch.idx]


class PairwisePool:
    """Fixed pool of provided (query, pos_doc, neg_doc) pairs."""

    kind = "pairwise"

    def __init__(self, samples, x_pos, x_neg, difficulties):
        self.samples = samples
        self.x_pos = x_pos
        self.x_neg = x_neg
        self._difficulties = difficulties

    def __len__(self):
        return len(self.samples)

    def draw(self, rng: np.random.Generator, batch_size: int) -> _Batch:
        return _Batch(self, rng.integers(0, len(self.samples), size=batch_size))

    def batch_arrays(self, batch: _Batch):
        return (self.x_pos[batch.idx], self.x_neg[batch.idx])

    def difficulty(self, batch: _Batch, heuristic: str) -> np.ndarray:
        return self._difficulties[heuristic][batch.idx]

    def batch_samples(self, batch: _Batch) -> list[TrainingSample]:
        return [self.samples[i] for i in batch.idx]


class SampledPairPool:
    """Judged positives paired with negatives drawn from the re-ranking pool.

    Eligible negatives for a query are its pool documents (run list plus
    judged docs) whose grade falls below the relevance threshold.
    """

    kind = "pairwise"

    def __init__(self, positives, pos_x, pos_base, pos_query_index,
                 query_ids, neg_doc_ids, neg_x, neg_base):
        self.positives = positives  # list of (qid, doc_id)
        self.pos_x = pos_x
        self.pos_base = pos_base  # heuristic -> (P,)
        self.pos_query_index = pos_query_index
        self.query_ids = query_ids
        self.neg_doc_ids = neg_doc_ids  # per query list of doc ids
        self.neg_x = neg_x  # per query (M_q, F)
        self.neg_base = neg_base  # heuristic -> per query (M_q,)

    def __len__(self):
        return len(self.positives)

    def draw(self, rng: np.random.Generator, batch_size: int) -> _Batch:
        idx = rng.integers(0, len(self.positives), size=batch_size)
        neg_pick = np.empty(batch_size, dtype=np.int64)
        for row, i in enumerate(idx):
            qi = self.pos_query_index[i]
            neg_pick[row] = rng.integers(0, self.neg_x[qi].shape[0])
        return _Batch(self, idx, neg_pick)

    def batch_arrays(self, batch: _Batch):
        x_pos = self.pos_x[batch.idx]
        x_neg = np.empty_like(x_pos)
        for row, (i, j) in enumerate(zip(batch.idx, batch.neg_pick)):
            x_neg[row] = self.neg_x[self.pos_query_index[i]][j]
        return (x_pos, x_neg)

    def difficulty(self, batch: _Batch, heuristic: str) -> np.ndarray:
        if heuristic == "one":
            return np.ones(len(batch.idx))
        pos = self.pos_base[heuristic][batch.idx]
        neg = np.empty_like(pos)
        for row, (i, j) in enumerate(zip(batch.idx, batch.neg_pick)):
            neg[row] = self.neg_base[heuristic][self.pos_query_index[i]][j]
        return (pos - neg + 1.0) / 2.0

    def batch_samples(self, batch: _Batch) -> list[TrainingSample]:
        out = []
        for i, j in zip(batch.idx, batch.neg_pick):
            qid, pos_doc = self.positives[i]
            out.append(PairwiseSample(qid, pos_doc, self.neg_doc_ids[self.pos_query_index[i]][j]))
        return out


def sample_batch(pool, rng: np.random.Generator, batch_size: int) -> list[TrainingSample]:
    """Draw one uniform batch and return it as training-sample objects."""
    if len(pool) == 0:
        raise DataError("empty training pool")
    return pool.batch_samples(pool.draw(rng, batch_size))


@dataclass
class Prepared:
    """Everything the loop needs, computed once per dataset."""

    loss_mode: str
    index: InvertedIndex
    bm25_params: BM25Params
    extractor: FeatureExtractor
    pool: PointwisePool | PairwisePool | SampledPairPool
    valid_eval: EvalSet | None
    test_eval: EvalSet | None


def prepare(
    dataset: Dataset,
    config: TrainConfig,
    analyzer: AnalyzerConfig | None = None,
    bm25_params: BM25Params | None = None,
    index: InvertedIndex | None = None,
) -> Prepared:
    """Build the index, features, difficulty caches, and eval sets."""
    if index is None:
        index = build_index(dataset.corpus, analyzer or AnalyzerConfig())
    params = bm25_params or BM25Params()
    train_runs = dataset.run_lists.get("train")
    if not train_runs:
        raise DataError("dataset has no train-split run lists")

    extractor = FeatureExtractor(index, params, dataset.corpus)
    fit_pairs = []
    for qid, run in train_runs.items():
        query = dataset.queries[qid]
        for entry in run.entries[: config.rerank_depth]:
            fit_pairs.append((query, entry.doc_id))
    extractor.fit(fit_pairs)

    scorers = {
        h: DifficultyScorer(
            DifficultyConfig(h, config.loss_mode),
            train_runs,
            index=index,
            params=params,
            queries=dataset.queries,
        )
        for h in POOL_HEURISTICS
    }

    def base(h, qid, doc_id):
        return scorers[h].base(qid, doc_id)

    samples = [
        s
        for s in dataset.training_samples
        if isinstance(s, PointwiseSample if config.loss_mode == "pointwise" else PairwiseSample)
    ]

    if config.loss_mode == "pointwise":
        if not samples:
            raise DataError("no pointwise training samples")
        x = extractor.featurize_many(
            [(dataset.queries[s.query_id], s.doc_id) for s in samples]
        )
        grades = np.array([s.grade for s in samples], dtype=np.float64)
        diffs = {}
        for h in POOL_HEURISTICS:
            if h == "one":
                diffs[h] = np.ones(len(samples))
            else:
                b = np.array([base(h, s.query_id, s.doc_id) for s in samples])
                diffs[h] = np.where(grades > 0, b, 1.0 - b)
        pool = PointwisePool(samples, x, grades, diffs)
    elif config.sample_negatives_from_run:
        pool = _build_sampled_pair_pool(dataset, config, extractor, train_runs, base)
    else:
        if not samples:
            raise DataError("no pairwise training samples")
        x_pos = extractor.featurize_many(
            [(dataset.queries[s.query_id], s.pos_doc_id) for s in samples]
        )
        x_neg = extractor.featurize_many(
            [(dataset.queries[s.query_id], s.neg_doc_id) for s in samples]
        )
        diffs = {}
        for h in POOL_HEURISTICS:
            if h == "one":
                diffs[h] = np.ones(len(samples))
            else:
                bp = np.array([base(h, s.query_id, s.pos_doc_id) for s in samples])
                bn = np.array([base(h, s.query_id, s.neg_doc_id) for s in samples])
                diffs[h] = (bp - bn + 1.0) / 2.0
        pool = PairwisePool(samples, x_pos, x_neg, diffs)

    valid_eval = None
    test_eval = None
    if dataset.run_lists.get("validation"):
        valid_eval = EvalSet(
            dataset.queries, dataset.run_lists["validation"], dataset.qrels,
            extractor, config.rerank_depth, config.relevance_threshold,
        )
    if dataset.run_lists.get("test"):
        test_eval = EvalSet(
            dataset.queries, dataset.run_lists["test"], dataset.qrels,
            extractor, config.rerank_depth, config.relevance_threshold,
        )
    return Prepared(config.loss_mode, index, params, extractor, pool, valid_eval, test_eval)


def _build_sampled_pair_pool(dataset, config, extractor, train_runs, base):
    positives: list[tuple[str, str]] = []
    pos_query_index: list[int] = []
    query_ids: list[str] = []
    neg_doc_ids: list[list[str]] = []
    neg_x: list[np.ndarray] = []
    neg_base: dict[str, list[np.ndarray]] = {h: [] for h in POOL_HEURISTICS if h != "one"}
    for qid in sorted(train_runs):
        grades = dataset.qrels.doc_grades(qid)
        run = train_runs[qid]
        pool_docs = [e.doc_id for e in run.entries[: config.rerank_depth]]
        seen = set(pool_docs)
        pool_docs += [d for d in sorted(grades) if d not in seen]
        negs = [d for d in pool_docs if grades.get(d, 0) < config.relevance_threshold]
        pos = [d for d in sorted(grades) if grades[d] >= config.relevance_threshold]
        if not negs or not pos:
            continue
        qi = len(query_ids)
        query_ids.append(qid)
        neg_doc_ids.append(negs)
        neg_x.append(extractor.featurize_many([(dataset.queries[qid], d) for d in negs]))
        for h in neg_base:
            neg_base[h].append(np.array([base(h, qid, d) for d in negs]))
        for doc in pos:
            positives.append((qid, doc))
            pos_query_index.append(qi)
    if not positives:
        raise DataError("no (positive, negative-pool) pairs available for sampling")
    pos_x = extractor.featurize_many(
        [(dataset.queries[qid], d) for qid, d in positives]
    )
    pos_base = {
        h: np.array([base(h, qid, d) for qid, d in positives])
        for h in POOL_HEURISTICS
        if h != "one"
    }
    return SampledPairPool(
        positives, pos_x, pos_base, np.array(pos_query_index, dtype=np.int64),
        query_ids, neg_doc_ids, neg_x, neg_base,
    )


@dataclass
class IterationRecord:
    iteration: int
    train_loss: float
    mean_weight: float
    valid_metric: float = math.nan


@dataclass
class TrainState:
    model: RankerModel
    adam: AdamState
    batch_rng: np.random.Generator
    iteration: int = 0
    best_value: float = -math.inf
    best_model: RankerModel | None = None
    best_iteration: int = -1
    since_improvement: int = 0
    history: list[IterationRecord] = field(default_factory=list)


def init_state(config: TrainConfig) -> TrainState:
    model = RankerModel.init(NUM_FEATURES, config.hidden, config.seed)
    batch_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
    return TrainState(model=model, adam=AdamState.for_model(model), batch_rng=batch_rng)


def run_iteration(
    state: TrainState,
    prepared: Prepared,
    schedule: CurriculumSchedule | None,
    config: TrainConfig,
) -> IterationRecord:
    """One training iteration; ``schedule=None`` trains unweighted."""
    if len(prepared.pool) == 0:
        raise DataError("empty training pool")
    if schedule is not None and schedule.difficulty is None:
        raise DataError("schedule has no difficulty configuration")
    if schedule is not None and schedule.difficulty.loss_mode != prepared.loss_mode:
        raise DataError(
            f"schedule loss mode {schedule.difficulty.loss_mode!r} does not match "
            f"prepared pool {prepared.loss_mode!r}"
        )
    i = state.iteration
    model = state.model
    pool = prepared.pool
    loss_sum = 0.0
    weight_sum = 0.0
    for _ in range(config.batches_per_iteration):
        batch = pool.draw(state.batch_rng, config.batch_size)
        if schedule is None:
            weights = np.ones(config.batch_size)
        else:
            d = batch.difficulty(schedule.difficulty.heuristic)
            if schedule.difficulty.anti:
                d = 1.0 - d
            weights = weight_array(schedule, d, i)
        arrays = pool.batch_arrays(batch)
        if prepared.loss_mode == "pointwise":
            loss, grad = pointwise_batch_loss_grad(model, arrays[0], arrays[1], weights)
        else:
            loss, grad = pairwise_batch_loss_grad(model, arrays[0], arrays[1], weights)
        if not math.isfinite(loss):
            raise DataError(f"non-finite training loss at iteration {i}")
        adam_step(model, state.adam, grad, config.learning_rate)
        loss_sum += loss
        weight_sum += float(weights.mean())
    record = IterationRecord(
        iteration=i,
        train_loss=loss_sum / config.batches_per_iteration,
        mean_weight=weight_sum / config.batches_per_iteration,
    )
    state.history.append(record)
    state.iteration += 1
    return record


@dataclass
class TrainResult:
    best_model: RankerModel
    best_value: float
    best_iteration: int
    history: list[IterationRecord]


def train(
    dataset: Dataset | None,
    schedule: CurriculumSchedule | None,
    config: TrainConfig,
    prepared: Prepared | None = None,
) -> TrainResult:
    """Full training run with validation rollback and early stopping."""
    if prepared is None:
        if dataset is None:
            raise DataError("train() needs a dataset or a prepared bundle")
        prepared = prepare(dataset, config)
    if prepared.valid_eval is None:
        raise DataError("dataset has no validation run lists")
    spec = config.metric_spec()
    state = init_state(config)
    while state.iteration < config.max_iterations:
        record = run_iteration(state, prepared, schedule, config)
        _, value = prepared.valid_eval.evaluate(state.model, spec)
        record.valid_metric = value
        if value > state.best_value:
            state.best_value = value
            state.best_model = state.model.copy()
            state.best_iteration = record.iteration
            state.since_improvement = 0
        else:
            state.since_improvement += 1
        if state.since_improvement > config.patience:
            break
    return TrainResult(
        best_model=state.best_model,
        best_value=state.best_value,
        best_iteration=state.best_iteration,
        history=state.history,
    )


@dataclass
class GridEntry:
    m: float
    validation_value: float
    result: TrainResult


def grid_search_m(
    dataset: Dataset | None,
    base_schedule: CurriculumSchedule,
    config: TrainConfig,
    grid,
    prepared: Prepared | None = None,
) -> tuple[float, list[GridEntry]]:
    """Train once per m; returns (best m, one entry per grid value).

    Best is the highest validation value; ties go to the smaller m.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("empty m grid")
    if prepared is None:
        prepared = prepare(dataset, config)
    entries = []
    for m in grid:
        schedule = replace(base_schedule, m=m)
        result = train(dataset, schedule, config, prepared=prepared)
        entries.append(GridEntry(m=m, validation_value=result.best_value, result=result))
    best = None
    for entry in sorted(entries, key=lambda e: e.m):
        if best is None or entry.validation_value > best.validation_value:
            best = entry
    return best.m, entries


def write_history_csv(history: list[IterationRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("iteration,train_loss,mean_weight,valid_metric\n")
        for rec in history:
            handle.write(
                f"{rec.iteration},{rec.train_loss:.10g},{rec.mean_weight:.10g},"
                f"{rec.valid_metric:.10g}\n"
            )
