import copy
import math

import numpy as np
import pytest

from currank.curriculum import CurriculumSchedule
from currank.difficulty import DifficultyConfig
from currank.errors import ConfigError, DataError
from currank.evalmetrics import evaluate
from currank.ranker import pairwise_batch_loss_grad, RankerModel
from currank.synth import SYNTH_ANALYZER, SynthConfig, generate
from currank.trainer import (
    TrainConfig,
    grid_search_m,
    init_state,
    prepare,
    run_iteration,
    sample_batch,
    train,
    write_history_csv,
)
from currank.trec_io import (
    Document,
    PairwiseSample,
    PointwiseSample,
    Qrels,
    Query,
    assemble_dataset,
)
from conftest import make_run


def toy_dataset():
    """Hand-built dataset whose validation metric is constant.

    All validation candidates share one text, so every model scores them
    identically, the stable re-sort keeps first-stage order, and the
    validation metric never moves after the first iteration.
    """
    queries = {
        "tq": Query("tq", "a b"),
        "vq": Query("vq", "p q"),
    }
    corpus = {
        "t1": Document("t1", "a a b"),
        "t2": Document("t2", "a c c"),
        "t3": Document("t3", "x y"),
        "v1": Document("v1", "p p z"),
        "v2": Document("v2", "p p z"),
        "v3": Document("v3", "p p z"),
    }
    qrels = Qrels()
    qrels.add("tq", "t1", 1)
    qrels.add("tq", "t2", 0)
    qrels.add("vq", "v1", 1)
    runs = {
        "train": {"tq": make_run("tq", [("t1", 3.0), ("t2", 2.0), ("t3", 1.0)])},
        "validation": {"vq": make_run("vq", [("v1", 3.0), ("v2", 2.0), ("v3", 1.0)])},
        "test": {"vq": make_run("vq", [("v1", 3.0), ("v2", 2.0), ("v3", 1.0)])},
    }
    samples = [
        PairwiseSample("tq", "t1", "t2"),
        PairwiseSample("tq", "t1", "t3"),
    ]
    return assemble_dataset(queries, corpus, qrels, runs, samples)


@pytest.fixture(scope="module")
def tiny_synth():
    config = SynthConfig(
        train_queries=20, validation_queries=10, test_queries=10,
        docs_per_query=30, vocab_size=2000, seed=3,
    )
    return generate(config)


@pytest.fixture(scope="module")
def tiny_prepared(tiny_synth):
    config = TrainConfig(loss_mode="pairwise", rerank_depth=30, max_iterations=30,
                         patience=30, validation_metric="map")
    return config, prepare(tiny_synth, config, analyzer=SYNTH_ANALYZER)


def recip_schedule(m, anti=False, mode="pairwise"):
    return CurriculumSchedule(m=m, difficulty=DifficultyConfig("recip", mode, anti=anti))


def one_schedule(m=5, anti=False, mode="pairwise"):
    return CurriculumSchedule(m=m, difficulty=DifficultyConfig("one", mode, anti=anti))


def test_sample_batch_pool_of_one():
    ds = toy_dataset()
    config = TrainConfig(loss_mode="pairwise", rerank_depth=3)
    prepared = prepare(ds, config, analyzer=SYNTH_ANALYZER)
    prepared.pool.samples = prepared.pool.samples[:1]
    prepared.pool.x_pos = prepared.pool.x_pos[:1]
    prepared.pool.x_neg = prepared.pool.x_neg[:1]
    for h in prepared.pool._difficulties:
        prepared.pool._difficulties[h] = prepared.pool._difficulties[h][:1]
    rng = np.random.default_rng(0)
    batch = sample_batch(prepared.pool, rng, 8)
    assert batch == [prepared.pool.samples[0]] * 8


def test_sample_batch_deterministic(tiny_prepared):
    _, prepared = tiny_prepared
    a = [sample_batch(prepared.pool, np.random.default_rng(9), 16) for _ in range(3)]
    b = [sample_batch(prepared.pool, np.random.default_rng(9), 16) for _ in range(3)]
    assert a == b


def test_sample_batch_uniformity_chi_square(tiny_prepared):
    _, prepared = tiny_prepared
    pool = prepared.pool
    keep = 4
    # shrink the pool to 4 samples for the frequency check
    small = copy.copy(pool)
    small.samples = pool.samples[:keep]
    small.x_pos = pool.x_pos[:keep]
    small.x_neg = pool.x_neg[:keep]
    small._difficulties = {h: v[:keep] for h, v in pool._difficulties.items()}
    rng = np.random.default_rng(123)
    total = 100_000
    counts = np.zeros(keep)
    drawn = 0
    while drawn < total:
        batch = small.draw(rng, 16)
        for idx in batch.idx:
            if drawn == total:
                break
            counts[idx] += 1
            drawn += 1
    expected = total / keep
    sigma = math.sqrt(total * 0.25 * 0.75)
    assert np.all(np.abs(counts - expected) < 3 * sigma)


def test_empty_pool_rejected(tiny_prepared):
    _, prepared = tiny_prepared
    empty = copy.copy(prepared.pool)
    empty.samples = []
    with pytest.raises(DataError):
        sample_batch(empty, np.random.default_rng(0), 4)


def test_constant_one_heuristic_bitwise_equals_unweighted(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=5, max_iterations=8, patience=8)
    state_w = init_state(config)
    state_u = init_state(config)
    for _ in range(8):
        run_iteration(state_w, prepared, one_schedule(m=4), config)
        run_iteration(state_u, prepared, None, config)
        assert np.array_equal(state_w.model.theta, state_u.model.theta)
        assert np.array_equal(state_w.adam.mom1, state_u.adam.mom1)
        assert np.array_equal(state_w.adam.mom2, state_u.adam.mom2)


def test_m1_matches_unweighted_from_iteration_one(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=11, max_iterations=10, patience=10)
    schedule = recip_schedule(m=1)
    state = init_state(config)
    run_iteration(state, prepared, schedule, config)  # iteration 0 uses D
    fork = copy.deepcopy(state)
    for _ in range(6):
        run_iteration(state, prepared, schedule, config)
        run_iteration(fork, prepared, None, config)
        assert np.array_equal(state.model.theta, fork.model.theta)


def test_zero_difficulty_iteration_leaves_parameters(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=2)
    state = init_state(config)
    before = state.model.theta.copy()
    record = run_iteration(state, prepared, one_schedule(m=5, anti=True), config)
    assert record.mean_weight == 0.0
    assert np.array_equal(state.model.theta, before)


def test_half_weights_halve_gradients(tiny_prepared):
    _, prepared = tiny_prepared
    model = RankerModel.init(5, 16, seed=0)
    pool = prepared.pool
    idx = np.arange(16)
    xp, xn = pool.x_pos[idx], pool.x_neg[idx]
    loss_full, grad_full = pairwise_batch_loss_grad(model, xp, xn, np.ones(16))
    loss_half, grad_half = pairwise_batch_loss_grad(model, xp, xn, np.full(16, 0.5))
    assert loss_half == pytest.approx(0.5 * loss_full, rel=1e-15)
    assert np.array_equal(grad_half, 0.5 * grad_full)


def test_nonfinite_loss_aborts():
    ds = toy_dataset()
    config = TrainConfig(loss_mode="pairwise", rerank_depth=3, batch_size=4)
    prepared = prepare(ds, config, analyzer=SYNTH_ANALYZER)
    prepared.pool.x_pos[:, 0] = np.nan
    state = init_state(config)
    with pytest.raises(DataError, match="non-finite"):
        run_iteration(state, prepared, None, config)


@pytest.mark.parametrize("patience,expected", [(3, 5), (15, 17)])
def test_early_stopping_counter(patience, expected):
    # Constant validation: the first iteration improves (from -inf),
    # every later one does not; the run stops after `patience` is exceeded.
    ds = toy_dataset()
    config = TrainConfig(
        loss_mode="pairwise", rerank_depth=3, patience=patience,
        max_iterations=100, batch_size=4, batches_per_iteration=2,
    )
    prepared = prepare(ds, config, analyzer=SYNTH_ANALYZER)
    result = train(None, None, config, prepared=prepared)
    assert len(result.history) == expected
    assert result.best_iteration == 0


def test_rollback_returns_best_snapshot(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=4, max_iterations=15, patience=15)
    result = train(None, recip_schedule(m=5), config, prepared=prepared)
    values = [r.valid_metric for r in result.history]
    assert result.best_value == max(values)
    assert result.best_iteration == values.index(max(values))
    _, revalidated = prepared.valid_eval.evaluate(result.best_model, config.metric_spec())
    assert revalidated == pytest.approx(result.best_value, abs=1e-12)


def test_train_deterministic(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=6, max_iterations=10, patience=10)
    r1 = train(None, recip_schedule(m=5), config, prepared=prepared)
    r2 = train(None, recip_schedule(m=5), config, prepared=prepared)
    assert [rec.valid_metric for rec in r1.history] == [rec.valid_metric for rec in r2.history]
    assert [rec.train_loss for rec in r1.history] == [rec.train_loss for rec in r2.history]
    assert np.array_equal(r1.best_model.theta, r2.best_model.theta)


def test_weight_ramp_reaches_one(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=1, max_iterations=10, patience=10)
    result = train(None, recip_schedule(m=4), config, prepared=prepared)
    weights = [rec.mean_weight for rec in result.history]
    assert all(w == 1.0 for w in weights[4:])
    for before, after in zip(weights[:4], weights[1:5]):
        assert after >= before - 0.02  # batch-composition wobble only


def test_grid_search_single_value(tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=0, max_iterations=5, patience=5)
    best_m, entries = grid_search_m(None, recip_schedule(m=1), config, [10], prepared=prepared)
    assert best_m == 10
    assert len(entries) == 1


def test_grid_search_runs_once_per_m_and_tie_break():
    ds = toy_dataset()  # constant validation: every m ties, smallest wins
    config = TrainConfig(
        loss_mode="pairwise", rerank_depth=3, patience=2, max_iterations=10,
        batch_size=4, batches_per_iteration=2,
    )
    prepared = prepare(ds, config, analyzer=SYNTH_ANALYZER)
    grid = [1, 5, 10, 20, 50, 100]
    best_m, entries = grid_search_m(None, recip_schedule(m=1), config, grid, prepared=prepared)
    assert len(entries) == 6
    assert [e.m for e in entries] == grid
    assert len({round(e.validation_value, 12) for e in entries}) == 1
    assert best_m == 1


def test_grid_search_empty_grid(tiny_prepared):
    base_config, prepared = tiny_prepared
    with pytest.raises(ConfigError):
        grid_search_m(None, recip_schedule(m=1), base_config, [], prepared=prepared)


def test_evalset_matches_evalmetrics(tiny_synth, tiny_prepared):
    # The fast in-trainer metric path must agree exactly with evaluate().
    base_config, prepared = tiny_prepared
    model = RankerModel.init(5, 16, seed=21)
    for name in ("map", "mrr@10", "p@1", "r-prec", "mrr"):
        from currank.evalmetrics import parse_metric

        spec = parse_metric(name)
        per_query, mean = prepared.valid_eval.evaluate(model, spec)
        runs = prepared.valid_eval.rerank(model)
        reference = evaluate(runs, tiny_synth.qrels, spec)
        assert per_query == pytest.approx(reference.per_query, abs=1e-12)
        assert mean == pytest.approx(reference.mean, abs=1e-12)


def test_rerank_is_stable_on_ties():
    ds = toy_dataset()
    config = TrainConfig(loss_mode="pairwise", rerank_depth=3)
    prepared = prepare(ds, config, analyzer=SYNTH_ANALYZER)
    model = RankerModel.init(5, 16, seed=0)
    runs = prepared.valid_eval.rerank(model)
    # identical texts -> identical scores -> first-stage order preserved
    assert [e.doc_id for e in runs["vq"].entries] == ["v1", "v2", "v3"]


def test_sampled_negative_pool(tiny_synth):
    config = TrainConfig(loss_mode="pairwise", rerank_depth=30,
                         sample_negatives_from_run=True)
    prepared = prepare(tiny_synth, config, analyzer=SYNTH_ANALYZER)
    rng = np.random.default_rng(3)
    batch = sample_batch(prepared.pool, rng, 32)
    qrels = tiny_synth.qrels
    for sample in batch:
        assert isinstance(sample, PairwiseSample)
        assert qrels.grade(sample.query_id, sample.pos_doc_id) >= 1
        assert qrels.grade(sample.query_id, sample.neg_doc_id) < 1
    # difficulty values for sampled pairs stay in range
    drawn = prepared.pool.draw(np.random.default_rng(4), 64)
    for h in ("recip", "norm", "kde"):
        d = prepared.pool.difficulty(drawn, h)
        assert np.all((d >= 0.0) & (d <= 1.0))


def test_loss_mode_mismatch_rejected(tiny_prepared):
    base_config, prepared = tiny_prepared
    state = init_state(base_config)
    with pytest.raises(DataError, match="loss mode"):
        run_iteration(state, prepared, recip_schedule(m=5, mode="pointwise"), base_config)


def test_pointwise_pool_training(tiny_synth):
    config = TrainConfig(loss_mode="pointwise", rerank_depth=30, max_iterations=5,
                         patience=5, validation_metric="map")
    prepared = prepare(tiny_synth, config, analyzer=SYNTH_ANALYZER)
    result = train(None, recip_schedule(m=2, mode="pointwise"), config, prepared=prepared)
    assert len(result.history) == 5
    assert all(isinstance(s, PointwiseSample) for s in prepared.pool.samples[:5])


def test_history_csv_round_shape(tmp_path, tiny_prepared):
    base_config, prepared = tiny_prepared
    from dataclasses import replace

    config = replace(base_config, seed=8, max_iterations=3, patience=3)
    result = train(None, None, config, prepared=prepared)
    path = tmp_path / "history.csv"
    write_history_csv(result.history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,train_loss,mean_weight,valid_metric"
    assert len(lines) == 1 + len(result.history)
