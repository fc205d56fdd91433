import math

import numpy as np
import pytest

from currank.errors import DataError
from currank.first_stage import BM25Params, build_index, bm25_score
from currank.ranker import (
    NUM_FEATURES,
    AdamState,
    FeatureExtractor,
    RankerModel,
    adam_step,
    pairwise_loss_and_grad,
    pointwise_loss_and_grad,
)
from currank.trec_io import Document, Query
from conftest import fd_gradient

RNG = np.random.default_rng(77)


def test_parameter_count():
    model = RankerModel.init(5, hidden=16, seed=0)
    assert model.num_parameters == (5 + 1) * 16 + (16 + 1)


def test_score_zero_parameters_is_zero():
    model = RankerModel(5, 16, 0, np.zeros((5 + 1) * 16 + 17))
    assert model.score(RNG.normal(size=5)) == 0.0


def test_score_bias_only():
    theta = np.zeros((5 + 1) * 16 + 17)
    theta[-1] = 3.25
    model = RankerModel(5, 16, 0, theta)
    assert model.score(RNG.normal(size=5)) == 3.25


def test_score_matches_independent_forward():
    model = RankerModel.init(5, hidden=8, seed=12)
    d, h = 5, 8
    w1 = model.theta[: h * d].reshape(h, d)
    b1 = model.theta[h * d : h * d + h]
    w2 = model.theta[h * d + h : h * d + 2 * h]
    b2 = model.theta[-1]
    for _ in range(10):
        x = RNG.normal(size=5)
        expected = float(w2 @ np.tanh(w1 @ x + b1) + b2)
        assert model.score(x) == pytest.approx(expected, rel=1e-12)


def test_score_batch_dimension_check():
    model = RankerModel.init(5, 16, 0)
    with pytest.raises(DataError):
        model.score_batch(np.zeros((3, 4)))


def test_pointwise_loss_minimum_and_fixture():
    model = RankerModel(5, 16, 0, np.zeros((5 + 1) * 16 + 17))
    x = RNG.normal(size=5)
    loss, grad = pointwise_loss_and_grad(model, x, 0.0)  # score 0, target 0
    assert loss == 0.0
    assert np.all(grad == 0.0)
    loss, _ = pointwise_loss_and_grad(model, x, 1.0)
    assert loss == 1.0


def test_pairwise_loss_symmetric_case_is_ln2():
    model = RankerModel.init(5, 16, seed=5)
    x = RNG.normal(size=5)
    loss, grad = pairwise_loss_and_grad(model, x, x)
    assert loss == pytest.approx(math.log(2), rel=1e-12)


def test_pairwise_loss_limit():
    # Score difference of 50 gives a loss below 1e-20.
    theta = np.zeros((1 + 1) * 1 + 2)  # d=1, h=1
    theta[0] = 50.0  # w1
    theta[2] = 1e9  # w2: score = 1e9 * tanh(50 x)
    model = RankerModel(1, 1, 0, theta)
    # tanh saturates to +-1, so score difference is 2e9; use modest inputs.
    loss, _ = pairwise_loss_and_grad(model, np.array([1.0]), np.array([-1.0]))
    assert loss < 1e-20
    assert loss >= 0.0


def test_pairwise_probability_complement():
    model = RankerModel.init(5, 16, seed=9)
    for _ in range(20):
        a = RNG.normal(size=5)
        b = RNG.normal(size=5)
        loss_ab, _ = pairwise_loss_and_grad(model, a, b)
        loss_ba, _ = pairwise_loss_and_grad(model, b, a)
        p_ab = math.exp(-loss_ab)
        p_ba = math.exp(-loss_ba)
        assert p_ab + p_ba == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_pointwise_gradient_check(seed):
    rng = np.random.default_rng(seed)
    model = RankerModel.init(5, 16, seed=seed)
    x = rng.normal(size=5)
    s = float(rng.integers(0, 2))
    _, grad = pointwise_loss_and_grad(model, x, s)
    fd = fd_gradient(
        lambda th: pointwise_loss_and_grad(RankerModel(5, 16, 0, th), x, s)[0],
        model.theta,
    )
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)
    assert rel.max() < 1e-4


@pytest.mark.parametrize("seed", range(4))
def test_pairwise_gradient_check(seed):
    rng = np.random.default_rng(100 + seed)
    model = RankerModel.init(5, 16, seed=seed)
    a = rng.normal(size=5)
    b = rng.normal(size=5)
    _, grad = pairwise_loss_and_grad(model, a, b)
    fd = fd_gradient(
        lambda th: pairwise_loss_and_grad(RankerModel(5, 16, 0, th), a, b)[0],
        model.theta,
    )
    rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-6)
    assert rel.max() < 1e-4


def test_adam_zero_gradient_no_change():
    model = RankerModel.init(5, 16, seed=1)
    before = model.theta.copy()
    state = AdamState.for_model(model)
    adam_step(model, state, np.zeros_like(model.theta), 1e-3)
    assert np.array_equal(model.theta, before)


def test_adam_first_step_magnitude():
    # Adam is elementwise: with g=1 on one coordinate, the first-step
    # magnitude equals the learning rate (bias corrections cancel).
    model = RankerModel(1, 1, 0, np.array([1.0, 0.5, 0.25, 0.125]))
    state = AdamState.for_model(model)
    grad = np.array([1.0, 0.0, 0.0, 0.0])
    adam_step(model, state, grad, 1e-3)
    assert model.theta[0] == pytest.approx(1.0 - 1e-3, abs=1e-8)
    assert np.array_equal(model.theta[1:], np.array([0.5, 0.25, 0.125]))


def test_adam_rejects_nonfinite_gradient():
    model = RankerModel.init(5, 16, seed=1)
    state = AdamState.for_model(model)
    bad = np.zeros_like(model.theta)
    bad[0] = np.nan
    with pytest.raises(DataError):
        adam_step(model, state, bad, 1e-3)


def test_init_deterministic_and_bounded():
    a = RankerModel.init(5, 16, seed=42)
    b = RankerModel.init(5, 16, seed=42)
    assert np.array_equal(a.theta, b.theta)
    c = RankerModel.init(5, 16, seed=43)
    assert not np.array_equal(a.theta, c.theta)
    d, h = 5, 16
    assert np.abs(a.theta[: h * d + h]).max() <= 1 / math.sqrt(d)
    assert np.abs(a.theta[h * d + h :]).max() <= 1 / math.sqrt(h)


def test_checkpoint_round_trip(tmp_path):
    model = RankerModel.init(5, 16, seed=3)
    path = tmp_path / "model.ckpt"
    model.save(path)
    loaded = RankerModel.load(path)
    assert loaded.in_dim == 5 and loaded.hidden == 16 and loaded.seed == 3
    assert np.array_equal(loaded.theta, model.theta)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"nope")
    with pytest.raises(DataError):
        RankerModel.load(path)


@pytest.fixture
def feature_world(plain_analyzer):
    corpus = {
        "d1": Document("d1", "apple pie recipe with apple"),
        "d2": Document("d2", "banana bread"),
        "d3": Document("d3", "apple pie"),
    }
    index = build_index(corpus, plain_analyzer)
    return corpus, index


def test_featurize_hand_computed(feature_world):
    corpus, index = feature_world
    extractor = FeatureExtractor(index, BM25Params(), corpus)
    query = Query("q", "apple pie")
    raw = extractor.raw(query, "d1")
    expected_bm25 = bm25_score(index, BM25Params(), ["apple", "pie"], "d1")
    assert raw[0] == pytest.approx(expected_bm25, abs=1e-12)
    assert raw[1] == 1.0  # both query terms present
    assert raw[2] == 1.0  # all query idf mass matched
    assert raw[3] == pytest.approx(math.log(1 + 5))
    assert raw[4] == 1.0  # bigram "apple pie" present once


def test_featurize_disjoint_doc(feature_world):
    corpus, index = feature_world
    extractor = FeatureExtractor(index, BM25Params(), corpus)
    raw = extractor.raw(Query("q", "apple pie"), "d2")
    assert raw[0] == 0.0 and raw[1] == 0.0 and raw[2] == 0.0 and raw[4] == 0.0


def test_featurize_standardization(feature_world):
    corpus, index = feature_world
    extractor = FeatureExtractor(index, BM25Params(), corpus)
    query = Query("q", "apple pie")
    pairs = [(query, d) for d in corpus]
    extractor.fit(pairs)
    matrix = extractor.featurize_many(pairs)
    assert matrix.shape == (3, NUM_FEATURES)
    assert np.allclose(matrix.mean(axis=0), 0.0, atol=1e-12)
    # constant features pass through unscaled rather than dividing by ~0
    stds = matrix.std(axis=0)
    assert np.all((stds < 1e-9) | (np.abs(stds - 1.0) < 1e-9))


def test_featurize_requires_fit(feature_world):
    corpus, index = feature_world
    extractor = FeatureExtractor(index, BM25Params(), corpus)
    with pytest.raises(DataError):
        extractor.featurize(Query("q", "apple"), "d1")


def test_featurize_unknown_doc(feature_world):
    corpus, index = feature_world
    extractor = FeatureExtractor(index, BM25Params(), corpus)
    with pytest.raises(DataError):
        extractor.raw(Query("q", "apple"), "nope")
