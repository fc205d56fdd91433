import numpy as np
import pytest

from currank.difficulty import (
    DifficultyConfig,
    DifficultyScorer,
    anti,
    difficulty_pairwise_kde,
    difficulty_pairwise_norm,
    difficulty_pairwise_recip,
    difficulty_pointwise_kde,
    difficulty_pointwise_norm,
    difficulty_pointwise_recip,
    fit_kde,
    kde_cdf,
    norm_score,
    recip,
)
from currank.errors import ConfigError, DataError
from currank.first_stage import BM25Params, build_index
from currank.trec_io import Document, PairwiseSample, PointwiseSample, Query
from conftest import make_run, random_run


@pytest.fixture
def run3():
    return make_run("q1", [("d1", 20.0), ("d2", 16.0), ("d3", 12.0), ("d4", 10.0)])


def test_recip_values(run3):
    assert recip(run3, "d1") == 1.0
    assert recip(run3, "d4") == 0.25
    assert recip(run3, "missing") == 0.0  # policy zero


def test_recip_strict_policy(run3):
    with pytest.raises(DataError):
        recip(run3, "missing", policy="strict")


def test_pointwise_recip_branches(run3):
    assert difficulty_pointwise_recip(run3, "d1", 1) == 1.0
    assert difficulty_pointwise_recip(run3, "d1", 0) == 0.0
    assert difficulty_pointwise_recip(run3, "d2", 1) == 0.5


def test_pairwise_recip_values(run3):
    assert difficulty_pairwise_recip(run3, "d1", "d1") == 0.5
    assert difficulty_pairwise_recip(run3, "d1", "d4") == pytest.approx(0.875)
    assert difficulty_pairwise_recip(run3, "missing", "d1") == 0.0


def test_norm_score_endpoints(run3):
    assert norm_score(run3, "d1") == 1.0
    assert norm_score(run3, "d4") == 0.0
    mid = make_run("q", [("a", 20.0), ("b", 16.0), ("c", 10.0)])
    assert norm_score(mid, "b") == pytest.approx(0.6)


def test_norm_all_equal_gives_half():
    run = make_run("q", [("a", 5.0), ("b", 5.0), ("c", 5.0)])
    for doc in ("a", "b", "c"):
        assert norm_score(run, doc) == 0.5


def test_norm_absent_policies(run3):
    assert norm_score(run3, "missing") == 0.0
    with pytest.raises(DataError):
        norm_score(run3, "missing", policy="strict")


def test_pointwise_and_pairwise_norm(run3):
    assert difficulty_pointwise_norm(run3, "d1", 1) == 1.0
    assert difficulty_pointwise_norm(run3, "d1", 0) == 0.0
    assert difficulty_pairwise_norm(run3, "d2", "d2") == 0.5


def test_fit_kde_scott_bandwidth():
    rng = np.random.default_rng(0)
    scores = rng.normal(10, 2, size=100)
    run = make_run("q", [(f"d{i}", s) for i, s in enumerate(np.sort(scores)[::-1])])
    model = fit_kde(run)
    assert model.bandwidth == pytest.approx(scores.std() * 100 ** (-0.2), rel=1e-12)


def test_fit_kde_zero_variance_fallback():
    run = make_run("q", [("a", 5.0)])
    model = fit_kde(run)
    assert model.bandwidth == pytest.approx(5.0 * 1e-3)
    assert kde_cdf(model, 5.0) == pytest.approx(0.5, abs=1e-9)
    # fully valid: still a CDF
    assert kde_cdf(model, 5.0 + 1.0) == pytest.approx(1.0, abs=1e-9)


def test_fit_kde_empty_rejected():
    with pytest.raises(DataError):
        fit_kde(np.array([]))


def test_kde_cdf_limits():
    model = fit_kde(np.array([4.0, 8.0, 9.0, 15.0]))
    lo = min(model.sample_points) - 20 * model.bandwidth
    hi = max(model.sample_points) + 20 * model.bandwidth
    assert kde_cdf(model, lo) == pytest.approx(0.0, abs=1e-9)
    assert kde_cdf(model, hi) == pytest.approx(1.0, abs=1e-9)


def _trapezoid_cdf(model, x):
    """Independent oracle: integrate the mixture density up to x."""
    h = model.bandwidth
    lo = float(min(model.sample_points)) - 12.0 * h
    if x <= lo:
        return 0.0
    steps = max(int(np.ceil((x - lo) / (h / 100.0))), 2)
    grid = np.linspace(lo, x, steps + 1)  # step <= h/100, endpoint exactly x
    dens = np.zeros_like(grid)
    for p in model.sample_points:
        z = (grid - p) / h
        dens += np.exp(-0.5 * z * z) / (h * np.sqrt(2 * np.pi))
    dens /= len(model.sample_points)
    return float(np.trapezoid(dens, grid))


def test_kde_cdf_matches_quadrature():
    rng = np.random.default_rng(42)
    scores = np.sort(rng.normal(12, 5, size=30))[::-1]
    model = fit_kde(scores)
    for x in np.linspace(scores.min() - 2, scores.max() + 2, 9):
        assert kde_cdf(model, x) == pytest.approx(_trapezoid_cdf(model, x), abs=1e-4)


def test_kde_cdf_steeper_in_dense_regions():
    # Long-tail shape: a dense cluster low, sparse high scores.
    scores = np.array([30.0, 25.0, 16.0, 15.5, 15.0, 14.5, 14.0, 13.5, 13.0, 12.5])
    model = fit_kde(scores)
    h = 0.1
    dense_slope = (kde_cdf(model, 14.0 + h) - kde_cdf(model, 14.0 - h)) / (2 * h)
    sparse_slope = (kde_cdf(model, 21.0 + h) - kde_cdf(model, 21.0 - h)) / (2 * h)
    assert dense_slope > sparse_slope


def test_kde_pointwise_branches(run3):
    model = fit_kde(run3)
    top = difficulty_pointwise_kde(run3, "d1", 1, model)
    assert 0.5 < top <= 1.0
    others = [difficulty_pointwise_kde(run3, d, 1, model) for d in ("d2", "d3", "d4")]
    assert top > max(others)
    assert difficulty_pointwise_kde(run3, "d1", 0, model) == pytest.approx(1.0 - top)


def test_kde_pairwise_symmetry_case(run3):
    run = make_run("q", [("a", 9.0), ("b", 9.0), ("c", 3.0)])
    assert difficulty_pairwise_kde(run, "a", "b") == pytest.approx(0.5)


def test_kde_unretrieved_scored_via_fallback(run3):
    model = fit_kde(run3)
    value = difficulty_pointwise_kde(run3, "dX", 1, model, fallback_score=5.0)
    assert 0.0 < value < kde_cdf(model, 10.0)
    with pytest.raises(DataError):
        difficulty_pointwise_kde(run3, "dX", 1, model)


def test_anti_transform():
    assert anti(0.0) == 1.0
    assert anti(0.5) == 0.5
    assert anti(0.875) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        anti(1.5)
    with pytest.raises(ValueError):
        anti(-0.1)


def test_anti_is_involution():
    rng = np.random.default_rng(2)
    for v in rng.uniform(size=50):
        assert anti(anti(v)) == pytest.approx(v, abs=1e-15)


def test_range_symmetry_complement_properties():
    rng = np.random.default_rng(9)
    for _ in range(100):
        run = random_run(rng)
        docs = [e.doc_id for e in run.entries]
        model = fit_kde(run)
        d1 = docs[int(rng.integers(len(docs)))]
        d2 = docs[int(rng.integers(len(docs)))]
        for point_fn, pair_fn in (
            (difficulty_pointwise_recip, difficulty_pairwise_recip),
            (difficulty_pointwise_norm, difficulty_pairwise_norm),
        ):
            rel = point_fn(run, d1, 1)
            non = point_fn(run, d1, 0)
            assert 0.0 <= rel <= 1.0 and 0.0 <= non <= 1.0
            assert rel + non == pytest.approx(1.0, abs=1e-12)
            ab = pair_fn(run, d1, d2)
            ba = pair_fn(run, d2, d1)
            assert 0.0 <= ab <= 1.0
            assert ab + ba == pytest.approx(1.0, abs=1e-12)
        kr = difficulty_pointwise_kde(run, d1, 1, model)
        kn = difficulty_pointwise_kde(run, d1, 0, model)
        assert 0.0 <= kr <= 1.0
        assert kr + kn == pytest.approx(1.0, abs=1e-12)
        kab = difficulty_pairwise_kde(run, d1, d2, model)
        kba = difficulty_pairwise_kde(run, d2, d1, model)
        assert kab + kba == pytest.approx(1.0, abs=1e-12)


def test_monotone_agreement_across_heuristics():
    rng = np.random.default_rng(17)
    for _ in range(20):
        run = random_run(rng, n=int(rng.integers(2, 40)))
        model = fit_kde(run)
        docs = [e.doc_id for e in run.entries]
        r = [recip(run, d) for d in docs]
        n = [norm_score(run, d) for d in docs]
        k = [float(kde_cdf(model, run.entry(d).score)) for d in docs]
        assert r == sorted(r, reverse=True)
        assert n == sorted(n, reverse=True)
        assert k == sorted(k, reverse=True)


def test_kde_cdf_monotone_nondecreasing():
    model = fit_kde(np.array([3.0, 5.0, 5.5, 9.0]))
    xs = np.linspace(0, 12, 200)
    values = [float(kde_cdf(model, x)) for x in xs]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_scorer_dispatch_and_anti(run3):
    runs = {"q1": run3}
    scorer = DifficultyScorer(DifficultyConfig("recip", "pointwise"), runs)
    assert scorer(PointwiseSample("q1", "d2", 1)) == 0.5
    anti_scorer = DifficultyScorer(DifficultyConfig("recip", "pointwise", anti=True), runs)
    assert anti_scorer(PointwiseSample("q1", "d2", 1)) == 0.5
    assert anti_scorer(PointwiseSample("q1", "d1", 1)) == 0.0
    pair_scorer = DifficultyScorer(DifficultyConfig("recip", "pairwise"), runs)
    assert pair_scorer(PairwiseSample("q1", "d1", "d4")) == pytest.approx(0.875)
    with pytest.raises(DataError):
        scorer(PairwiseSample("q1", "d1", "d4"))


def test_scorer_constant_one_heuristic(run3):
    runs = {"q1": run3}
    one = DifficultyScorer(DifficultyConfig("one", "pointwise"), runs)
    assert one(PointwiseSample("q1", "d4", 0)) == 1.0
    one_pair = DifficultyScorer(DifficultyConfig("one", "pairwise"), runs)
    assert one_pair(PairwiseSample("q1", "d4", "d1")) == 1.0


def test_scorer_kde_uses_bm25_for_unretrieved(plain_analyzer):
    corpus = {
        "d1": Document("d1", "a a b"),
        "d2": Document("d2", "a c"),
        "d3": Document("d3", "x y"),
    }
    index = build_index(corpus, plain_analyzer)
    run = make_run("q1", [("d1", 2.0), ("d2", 1.0)])
    cfg = DifficultyConfig("kde", "pointwise")
    scorer = DifficultyScorer(
        cfg, {"q1": run}, index=index, params=BM25Params(),
        queries={"q1": Query("q1", "a b")},
    )
    value = scorer.pointwise("q1", "d3", 1)  # unretrieved, bm25 score 0
    assert 0.0 < value < 0.5
    strict = DifficultyScorer(
        DifficultyConfig("kde", "pointwise", unretrieved_policy="strict"),
        {"q1": run}, index=index, params=BM25Params(),
        queries={"q1": Query("q1", "a b")},
    )
    with pytest.raises(DataError):
        strict.pointwise("q1", "d3", 1)


def test_config_validation():
    with pytest.raises(ConfigError):
        DifficultyConfig("cosine", "pointwise")
    with pytest.raises(ConfigError):
        DifficultyConfig("recip", "listwise")
    with pytest.raises(ConfigError):
        DifficultyConfig("recip", "pointwise", unretrieved_policy="ignore")


def test_export_weights(tmp_path):
    from currank.difficulty import export_weights

    samples = [PointwiseSample("q1", "d1", 1), PairwiseSample("q1", "d1", "d2")]
    path = tmp_path / "weights.tsv"
    export_weights(samples, [1.0, 0.875], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "q1\td1\t1.000000"
    assert lines[1] == "q1\td1|d2\t0.875000"
