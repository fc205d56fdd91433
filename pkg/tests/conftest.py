import numpy as np
import pytest

from currank.first_stage import AnalyzerConfig, BM25Params, build_index
from currank.trec_io import Document, Qrels, RunEntry, RunList


@pytest.fixture
def plain_analyzer():
    return AnalyzerConfig(stem=False, stopwords=False)


@pytest.fixture
def tiny_corpus():
    return {
        "d1": Document("d1", "a b b"),
        "d2": Document("d2", "b c"),
        "d3": Document("d3", "c c d e"),
        "d4": Document("d4", "x y z"),
    }


@pytest.fixture
def tiny_index(tiny_corpus, plain_analyzer):
    return build_index(tiny_corpus, plain_analyzer)


@pytest.fixture
def default_params():
    return BM25Params()


def make_run(query_id, scored):
    """RunList from (doc_id, score) pairs already in rank order."""
    entries = [RunEntry(d, s, i + 1) for i, (d, s) in enumerate(scored)]
    return RunList(query_id, entries)


def random_run(rng, query_id="q", n=None, ties=False):
    """Random RunList with n entries and strictly or weakly decreasing scores."""
    if n is None:
        n = int(rng.integers(1, 101))
    raw = rng.normal(loc=10.0, scale=4.0, size=n)
    if ties and n > 1:
        idx = rng.integers(0, n - 1)
        raw[idx + 1] = raw[idx]
    scores = np.sort(raw)[::-1]
    return make_run(query_id, [(f"{query_id}_d{i}", float(s)) for i, s in enumerate(scores)])


def fd_gradient(f, theta, eps=1e-5):
    """Central finite differences of a scalar function of theta."""
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        up = theta.copy()
        up[j] += eps
        down = theta.copy()
        down[j] -= eps
        grad[j] = (f(up) - f(down)) / (2.0 * eps)
    return grad


@pytest.fixture
def qrels_simple():
    q = Qrels()
    q.add("q1", "d1", 1)
    q.add("q1", "d2", 0)
    return q
