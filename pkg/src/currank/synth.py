"""Synthetic answer-ranking benchmark with controllable easy/hard structure.

The generated world: each query is a small set of vocabulary terms and
owns a pool of candidate documents with four archetypes.

* easy positives — carry every query term (tf ~2) with the terms in
  query order (bigram matches), so the first stage ranks them on top
  and a ranker can spot them from overlap features;
* hard positives — share a single query term, so they rank near the
  bottom, but are long: document length is a latent relevance signal
  that only this archetype carries, and that a trained ranker must
  discover to fix these queries;
* hard negatives — share most query terms scattered out of order, so
  they crowd the top ranks despite being non-relevant;
* long negatives — non-relevant decoys with the hard-positive shape
  (one shared term at tf 2) but drawn somewhat shorter, so the length
  signal is graded rather than binary and exploiting it fully requires
  the hard training pairs;
* easy negatives — share at most one term; many are not retrieved.

Per query, the archetype counts are binomial in the configured rates,
so a slice of queries has only hard positives and stays hard even for
a good ranker.

Train-split label corruption has two channels. ``missing_label_rate``
drops relevant documents' train labels to 0: these sit at the top of
the first-stage ranking, get drawn as "negatives" for training pairs,
and directly poison the main relevance rule. ``noise_rate`` flips each
train label independently, mostly minting false positives far down the
ranking. Both kinds of corruption disagree with the first-stage score,
which is exactly what the difficulty heuristics key on, so curriculum
weighting can suppress them early. Pair negatives are drawn
rank-biased (probability proportional to 1/rank) from the top of the
ranking, as a re-ranker is trained against the pool it must beat.

Generation is fully deterministic under the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError
from .first_stage import AnalyzerConfig, BM25Params, build_index, retrieve
from .trec_io import (
    Dataset,
    Document,
    PairwiseSample,
    PointwiseSample,
    Qrels,
    Query,
    assemble_dataset,
)

# Token-count ranges (low inclusive, high exclusive). Hard positives are
# long; long-negative decoys overlap them from below, so separating the
# two needs a graded use of length, not a threshold.
HARD_POS_LENGTH = (50, 90)
DECOY_LENGTH = (45, 80)
BASE_LENGTH = (15, 55)

# The generated text is synthetic tokens; stemming/stopwords would be no-ops.
SYNTH_ANALYZER = AnalyzerConfig(stem=False, stopwords=False)
SYNTH_BM25 = BM25Params()

ROLES = ("easy_pos", "hard_pos", "hard_neg", "long_neg", "easy_neg")


@dataclass(frozen=True)
class SynthConfig:
    train_queries: int = 200
    validation_queries: int = 50
    test_queries: int = 50
    docs_per_query: int = 100
    vocab_size: int = 20000
    query_len: int = 4
    relevant_per_query: int = 2
    hard_positive_rate: float = 0.45
    hard_negative_rate: float = 0.2
    long_negative_rate: float = 0.08
    missing_label_rate: float = 0.08
    noise_rate: float = 0.02
    pairs_per_positive: int = 5
    neg_sample_depth: int = 25
    run_depth: int = 100
    seed: int = 7

    def __post_init__(self):
        for name in ("hard_positive_rate", "hard_negative_rate",
                     "long_negative_rate", "missing_label_rate", "noise_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must be in [0, 1], got {value}")
        for name in ("train_queries", "validation_queries", "test_queries",
                     "docs_per_query", "vocab_size", "query_len",
                     "relevant_per_query", "pairs_per_positive",
                     "neg_sample_depth", "run_depth"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if self.relevant_per_query >= self.docs_per_query:
            raise DataError("relevant_per_query must be smaller than docs_per_query")
        if self.vocab_size < 10 * self.query_len:
            raise DataError(
                f"vocab_size {self.vocab_size} too small for {self.query_len} "
                "distinct query terms plus fillers (need >= 10x query_len)"
            )


def noisy_label_config(base: SynthConfig | None = None) -> SynthConfig:
    """The heavier-corruption variant used by the static-weighting comparison."""
    return replace(base or SynthConfig(), missing_label_rate=0.2, noise_rate=0.05)


def _permuted(rng: np.random.Generator, items: list) -> list:
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def _fillers(rng, vocab, query_term_ids: set[int], count: int) -> list[str]:
    out = []
    size = len(vocab)
    while len(out) < count:
        t = int(rng.integers(0, size))
        if t not in query_term_ids:
            out.append(vocab[t])
    return out


def _make_doc_tokens(rng, vocab, q_terms, q_ids, role) -> list[str]:
    if role == "hard_pos":
        length = int(rng.integers(*HARD_POS_LENGTH))
    elif role == "long_neg":
        length = int(rng.integers(*DECOY_LENGTH))
    else:
        length = int(rng.integers(*BASE_LENGTH))
    if role == "easy_pos":
        # Query terms in order (bigram matches), each repeated once more,
        # one of them twice more.
        block = list(q_terms)
        extras = list(q_terms)
        extras.append(q_terms[int(rng.integers(0, len(q_terms)))])
        fill = _fillers(rng, vocab, q_ids, max(length - len(block) - len(extras), 0))
        return block + _permuted(rng, extras + fill)
    if role == "hard_pos":
        # One query term, twice: enough to stay inside the retrieval
        # depth despite the length penalty, still far down the ranking.
        term = q_terms[int(rng.integers(0, len(q_terms)))]
        fill = _fillers(rng, vocab, q_ids, max(length - 2, 1))
        return _permuted(rng, [term, term] + fill)
    if role == "long_neg":
        # The decoy: hard-positive shape, only the length range differs.
        term = q_terms[int(rng.integers(0, len(q_terms)))]
        fill = _fillers(rng, vocab, q_ids, max(length - 2, 1))
        return _permuted(rng, [term, term] + fill)
    if role == "hard_neg":
        n_shared = int(rng.integers(max(len(q_terms) - 1, 1), len(q_terms) + 1))
        shared = _permuted(rng, list(q_terms))[:n_shared]
        fill = _fillers(rng, vocab, q_ids, max(length - n_shared, 0))
        return _permuted(rng, shared + fill)
    # easy_neg: at most one query term.
    tokens = []
    if rng.random() < 0.5:
        tokens.append(q_terms[int(rng.integers(0, len(q_terms)))])
    tokens += _fillers(rng, vocab, q_ids, max(length - len(tokens), 1))
    return _permuted(rng, tokens)


def generate_with_roles(config: SynthConfig) -> tuple[Dataset, dict[str, str]]:
    """Generate the dataset plus a doc_id -> archetype map (for analysis)."""
    rng = np.random.default_rng(config.seed)
    vocab = [f"w{i:05d}" for i in range(config.vocab_size)]
    queries: dict[str, Query] = {}
    corpus: dict[str, Document] = {}
    qrels = Qrels()
    samples = []
    roles: dict[str, str] = {}
    split_query_ids: dict[str, list[str]] = {}

    splits = (
        ("train", config.train_queries),
        ("validation", config.validation_queries),
        ("test", config.test_queries),
    )
    for split, count in splits:
        split_query_ids[split] = []
        for qi in range(count):
            qid = f"{split[:5]}_q{qi:04d}"
            split_query_ids[split].append(qid)
            term_ids = rng.choice(config.vocab_size, size=config.query_len, replace=False)
            q_ids = {int(t) for t in term_ids}
            q_terms = [vocab[int(t)] for t in term_ids]
            queries[qid] = Query(qid, " ".join(q_terms))

            n_rel = config.relevant_per_query
            n_neg = config.docs_per_query - n_rel
            n_hard_pos = int(rng.binomial(n_rel, config.hard_positive_rate))
            n_hard_neg = int(rng.binomial(n_neg, config.hard_negative_rate))
            n_long_neg = int(rng.binomial(n_neg - n_hard_neg, config.long_negative_rate))
            query_roles = (
                ["easy_pos"] * (n_rel - n_hard_pos)
                + ["hard_pos"] * n_hard_pos
                + ["hard_neg"] * n_hard_neg
                + ["long_neg"] * n_long_neg
                + ["easy_neg"] * (n_neg - n_hard_neg - n_long_neg)
            )

            for di, role in enumerate(query_roles):
                doc_id = f"{qid}_d{di:03d}"
                tokens = _make_doc_tokens(rng, vocab, q_terms, q_ids, role)
                corpus[doc_id] = Document(doc_id, " ".join(tokens))
                roles[doc_id] = role
                relevant = role in ("easy_pos", "hard_pos")
                grade = 1 if relevant else 0
                if split == "train":
                    if relevant and rng.random() < config.missing_label_rate:
                        grade = 0  # annotation gap: relevant but unlabeled
                    if rng.random() < config.noise_rate:
                        grade = 1 - grade
                qrels.add(qid, doc_id, grade)

    index = build_index(corpus, SYNTH_ANALYZER)
    run_lists = {
        split: {
            qid: retrieve(index, SYNTH_BM25, queries[qid], config.run_depth)
            for qid in qids
        }
        for split, qids in split_query_ids.items()
    }

    # Training samples. Pointwise: every judged pool document. Pairwise:
    # each labeled-positive document paired with negatives drawn
    # rank-biased (p proportional to 1/rank) from the top of its
    # first-stage ranking, so pairs look like the pool the re-ranker
    # must reorder at inference time.
    for qid in split_query_ids["train"]:
        grades = qrels.doc_grades(qid)
        for doc_id in sorted(grades):
            samples.append(PointwiseSample(qid, doc_id, grades[doc_id]))
        run = run_lists["train"][qid]
        neg_pool = [
            e.doc_id
            for e in run.entries[: config.neg_sample_depth]
            if grades.get(e.doc_id, 0) <= 0
        ]
        if not neg_pool:
            continue
        weights = np.array([1.0 / (i + 1) for i in range(len(neg_pool))])
        weights /= weights.sum()
        for pos in sorted(d for d, g in grades.items() if g > 0):
            for _ in range(config.pairs_per_positive):
                neg = neg_pool[int(rng.choice(len(neg_pool), p=weights))]
                samples.append(PairwiseSample(qid, pos, neg))

    dataset = assemble_dataset(queries, corpus, qrels, run_lists, samples)
    return dataset, roles


def generate(config: SynthConfig) -> Dataset:
    """Generate the full dataset: corpus, qrels, runs, and training samples."""
    return generate_with_roles(config)[0]
