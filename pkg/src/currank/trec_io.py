"""TREC-style data files: corpora, queries, qrels, run files, training triples.

Formats (all UTF-8):

* run file     — ``qid Q0 docid rank score tag``, whitespace-separated
* qrels        — ``qid 0 docid grade``
* queries      — TSV ``qid<TAB>text``
* corpus       — TSV ``docid<TAB>text``
* train triples — TSV; pairwise ``qid<TAB>pos_docid<TAB>neg_docid``,
  pointwise ``qid<TAB>docid<TAB>grade``

Reads are strict: a malformed line raises :class:`ParseError` with its
line number. Run files are written with the rank column regenerated
1..n and scores at a fixed 6-decimal precision, so write→read round
trips are exact on (qid, docid, rank) and on score up to that precision.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .errors import DataError, ParseError

SPLITS = ("train", "validation", "test")


class RunFileWarning(UserWarning):
    """Raised when a run file needs repair (rank/score inconsistency)."""


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class RunList:
    """One query's ranking: entries ordered by rank 1..n, scores non-increasing."""

    query_id: str
    entries: list[RunEntry]
    _by_doc: dict[str, RunEntry] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        prev_score = None
        for pos, entry in enumerate(self.entries, 1):
            if entry.rank != pos:
                raise DataError(
                    f"run list {self.query_id!r}: rank {entry.rank} at position {pos}"
                )
            if prev_score is not None and entry.score > prev_score:
                raise DataError(
                    f"run list {self.query_id!r}: score increases at rank {entry.rank}"
                )
            prev_score = entry.score
        self._by_doc = {e.doc_id: e for e in self.entries}
        if len(self._by_doc) != len(self.entries):
            raise DataError(f"run list {self.query_id!r}: duplicate doc ids")

    @classmethod
    def from_scores(cls, query_id: str, scored: list[tuple[str, float]]) -> "RunList":
        """Build from (doc_id, score) pairs; sorts by score descending.

        The sort is stable, so equal scores keep their input order.
        """
        order = sorted(range(len(scored)), key=lambda i: -scored[i][1])
        entries = [
            RunEntry(scored[i][0], scored[i][1], rank) for rank, i in enumerate(order, 1)
        ]
        return cls(query_id, entries)

    def entry(self, doc_id: str) -> RunEntry | None:
        return self._by_doc.get(doc_id)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_doc

    def __len__(self) -> int:
        return len(self.entries)

    def scores(self) -> list[float]:
        return [e.score for e in self.entries]


class Qrels:
    """Relevance judgments: (query_id, doc_id) -> integer grade."""

    def __init__(self, judgments: dict[tuple[str, str], int] | None = None):
        self.judgments: dict[tuple[str, str], int] = dict(judgments or {})

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        key = (query_id, doc_id)
        if key in self.judgments:
            raise DataError(f"duplicate judgment for {key}")
        self.judgments[key] = int(grade)

    def grade(self, query_id: str, doc_id: str, default: int = 0) -> int:
        return self.judgments.get((query_id, doc_id), default)

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self.judgments

    def __len__(self) -> int:
        return len(self.judgments)

    def __eq__(self, other) -> bool:
        return isinstance(other, Qrels) and self.judgments == other.judgments

    def query_ids(self) -> set[str]:
        return {qid for qid, _ in self.judgments}

    def doc_grades(self, query_id: str) -> dict[str, int]:
        return {d: g for (q, d), g in self.judgments.items() if q == query_id}

    def relevant_docs(self, query_id: str, threshold: int = 1) -> set[str]:
        return {
            d for (q, d), g in self.judgments.items() if q == query_id and g >= threshold
        }

    def merge(self, other: "Qrels") -> "Qrels":
        """Union of judgments; duplicate (query, doc) keys are an error."""
        merged = Qrels(self.judgments)
        for (qid, did), grade in other.judgments.items():
            merged.add(qid, did, grade)
        return merged


@dataclass(frozen=True)
class PointwiseSample:
    query_id: str
    doc_id: str
    grade: int


@dataclass(frozen=True)
class PairwiseSample:
    query_id: str
    pos_doc_id: str
    neg_doc_id: str


TrainingSample = PointwiseSample | PairwiseSample


@dataclass
class Dataset:
    """A complete benchmark: queries, corpus, judgments, per-split rankings."""

    queries: dict[str, Query]
    corpus: dict[str, Document]
    qrels: Qrels
    run_lists: dict[str, dict[str, RunList]]  # split -> qid -> RunList
    training_samples: list[TrainingSample]

    def split_queries(self, split: str) -> list[Query]:
        return [self.queries[qid] for qid in self.run_lists.get(split, {})]


def _iter_lines(path):
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def read_run_file(path) -> dict[str, RunList]:
    """Parse a 6-column run file into per-query RunLists sorted by rank.

    Non-consecutive ranks or scores that increase with rank are repaired
    by re-ranking on score descending (stable), with a warning.
    """
    per_query: dict[str, list[tuple[int, str, float]]] = {}
    seen: set[tuple[str, str]] = set()
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(path, lineno, f"expected 6 fields, got {len(parts)}")
        qid, _, doc_id, rank_s, score_s, _ = parts
        try:
            rank = int(rank_s)
        except ValueError:
            raise ParseError(path, lineno, f"bad rank {rank_s!r}") from None
        try:
            score = float(score_s)
        except ValueError:
            raise ParseError(path, lineno, f"bad score {score_s!r}") from None
        key = (qid, doc_id)
        if key in seen:
            raise ParseError(path, lineno, f"duplicate entry for {key}")
        seen.add(key)
        per_query.setdefault(qid, []).append((rank, doc_id, score))

    runs: dict[str, RunList] = {}
    for qid, rows in per_query.items():
        rows.sort(key=lambda r: r[0])  # stable: file order kept for equal ranks
        ranks_ok = all(rank == pos for pos, (rank, _, _) in enumerate(rows, 1))
        scores_ok = all(rows[i][2] >= rows[i + 1][2] for i in range(len(rows) - 1))
        if ranks_ok and scores_ok:
            runs[qid] = RunList(
                qid, [RunEntry(d, s, r) for r, d, s in rows]
            )
        else:
            warnings.warn(
                f"{path}: query {qid!r} has inconsistent ranks/scores; "
                "re-ranking by score descending",
                RunFileWarning,
            )
            runs[qid] = RunList.from_scores(qid, [(d, s) for _, d, s in rows])
    return runs


def write_run_file(runs: dict[str, RunList], tag: str, path) -> None:
    """Write runs in the 6-column format, scores at 6 decimals, queries sorted."""
    with open(path, "w", encoding="utf-8") as handle:
        for qid in sorted(runs):
            for rank, entry in enumerate(runs[qid].entries, 1):
                handle.write(f"{qid} Q0 {entry.doc_id} {rank} {entry.score:.6f} {tag}\n")


def read_qrels(path) -> Qrels:
    qrels = Qrels()
    for lineno, line in _iter_lines(path):
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(path, lineno, f"expected 4 fields, got {len(parts)}")
        qid, _, doc_id, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise ParseError(path, lineno, f"non-integer grade {grade_s!r}") from None
        try:
            qrels.add(qid, doc_id, grade)
        except DataError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    return qrels


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for (qid, doc_id), grade in sorted(qrels.judgments.items()):
            handle.write(f"{qid} 0 {doc_id} {grade}\n")


def read_training_pairs(path, mode: str) -> list[TrainingSample]:
    """Read TSV training triples; ``mode`` is ``pairwise`` or ``pointwise``."""
    if mode not in ("pairwise", "pointwise"):
        raise DataError(f"unknown training sample mode {mode!r}")
    samples: list[TrainingSample] = []
    for lineno, line in _iter_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, lineno, f"expected 3 columns, got {len(parts)}")
        if mode == "pairwise":
            samples.append(PairwiseSample(parts[0], parts[1], parts[2]))
        else:
            try:
                grade = int(parts[2])
            except ValueError:
                raise ParseError(path, lineno, f"non-integer grade {parts[2]!r}") from None
            samples.append(PointwiseSample(parts[0], parts[1], grade))
    return samples


def write_training_pairs(samples: list[TrainingSample], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            if isinstance(sample, PairwiseSample):
                handle.write(f"{sample.query_id}\t{sample.pos_doc_id}\t{sample.neg_doc_id}\n")
            else:
                handle.write(f"{sample.query_id}\t{sample.doc_id}\t{sample.grade}\n")


def _read_tsv_texts(path, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in _iter_lines(path):
        parts = line.split("\t", 1)
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ParseError(path, lineno, f"expected '<id><TAB><text>' {what} line")
        if parts[0] in out:
            raise ParseError(path, lineno, f"duplicate {what} id {parts[0]!r}")
        out[parts[0]] = parts[1]
    return out


def read_queries(path) -> dict[str, Query]:
    return {qid: Query(qid, text) for qid, text in _read_tsv_texts(path, "query").items()}


def read_corpus(path) -> dict[str, Document]:
    return {did: Document(did, text) for did, text in _read_tsv_texts(path, "document").items()}


def write_queries(queries: dict[str, Query], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for qid, query in queries.items():
            handle.write(f"{qid}\t{query.text}\n")


def write_corpus(corpus: dict[str, Document], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for did, doc in corpus.items():
            handle.write(f"{did}\t{doc.text}\n")


def assemble_dataset(
    queries: dict[str, Query],
    corpus: dict[str, Document],
    qrels: Qrels,
    run_lists: dict[str, dict[str, RunList]],
    training_samples: list[TrainingSample],
) -> Dataset:
    """Build a Dataset, enforcing referential integrity.

    Every run entry must reference a corpus document and a known query;
    every training sample must reference existing queries and documents.
    Qrels may mention documents outside the corpus (common for shared
    judgment files) and are not cross-checked.
    """
    for split, runs in run_lists.items():
        for qid, run in runs.items():
            if qid not in queries:
                raise DataError(f"{split} run references unknown query {qid!r}")
            for entry in run.entries:
                if entry.doc_id not in corpus:
                    raise DataError(
                        f"{split} run for {qid!r} references unknown doc {entry.doc_id!r}"
                    )
    for sample in training_samples:
        if sample.query_id not in queries:
            raise DataError(f"training sample references unknown query {sample.query_id!r}")
        doc_ids = (
            (sample.pos_doc_id, sample.neg_doc_id)
            if isinstance(sample, PairwiseSample)
            else (sample.doc_id,)
        )
        for doc_id in doc_ids:
            if doc_id not in corpus:
                raise DataError(f"training sample references unknown doc {doc_id!r}")
    return Dataset(queries, corpus, qrels, run_lists, training_samples)


# Standard file names inside a dataset directory.
_DATASET_FILES = {
    "corpus": "corpus.tsv",
    "queries": "queries.tsv",
    "qrels": "qrels.txt",
    "pairs": "pairs.train.tsv",
    "points": "points.train.tsv",
}


def dataset_paths(root) -> dict[str, str]:
    import os

    paths = {key: os.path.join(root, name) for key, name in _DATASET_FILES.items()}
    for split in SPLITS:
        paths[f"run.{split}"] = os.path.join(root, f"run.{split}.txt")
    return paths


def load_dataset_dir(root, loss_mode: str) -> Dataset:
    """Load a dataset directory written by ``synth`` (or hand-assembled)."""
    import os

    paths = dataset_paths(root)
    queries = read_queries(paths["queries"])
    corpus = read_corpus(paths["corpus"])
    qrels = read_qrels(paths["qrels"])
    run_lists = {}
    for split in SPLITS:
        run_path = paths[f"run.{split}"]
        if os.path.exists(run_path):
            run_lists[split] = read_run_file(run_path)
    sample_path = paths["pairs"] if loss_mode == "pairwise" else paths["points"]
    samples = read_training_pairs(sample_path, loss_mode)
    return assemble_dataset(queries, corpus, qrels, run_lists, samples)


def write_dataset_dir(dataset: Dataset, root, run_tag: str = "bm25") -> None:
    import os

    os.makedirs(root, exist_ok=True)
    paths = dataset_paths(root)
    write_queries(dataset.queries, paths["queries"])
    write_corpus(dataset.corpus, paths["corpus"])
    write_qrels(dataset.qrels, paths["qrels"])
    for split, runs in dataset.run_lists.items():
        write_run_file(runs, run_tag, paths[f"run.{split}"])
    pairs = [s for s in dataset.training_samples if isinstance(s, PairwiseSample)]
    points = [s for s in dataset.training_samples if isinstance(s, PointwiseSample)]
    if pairs:
        write_training_pairs(pairs, paths["pairs"])
    if points:
        write_training_pairs(points, paths["points"])
