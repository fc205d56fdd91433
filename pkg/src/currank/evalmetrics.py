"""Ranking metrics (MRR@k, P@1, MAP, R-Prec) and paired significance tests.

Relevance means qrels grade >= ``relevance_threshold``. Queries with no
relevant document at the threshold score 0 for MRR/P@1 and are excluded
from the MAP/R-Prec average (trec_eval-compatible behavior).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .trec_io import Qrels, RunList

_KINDS = ("mrr", "p1", "map", "rprec")


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    k: int | None = None
    relevance_threshold: int = 1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown metric kind {self.kind!r}")
        if self.k is not None and (self.kind != "mrr" or self.k < 1):
            raise ConfigError("a cutoff k is only valid for mrr@k and must be >= 1")

    def label(self) -> str:
        if self.kind == "mrr":
            return f"mrr@{self.k}" if self.k else "mrr"
        return {"p1": "p@1", "map": "map", "rprec": "r-prec"}[self.kind]


def parse_metric(text: str, relevance_threshold: int = 1) -> MetricSpec:
    """Parse names like ``mrr@10``, ``mrr``, ``p@1``, ``map``, ``r-prec``."""
    low = text.strip().lower()
    if low.startswith("mrr"):
        if "@" in low:
            try:
                k = int(low.split("@", 1)[1])
            except ValueError:
                raise ConfigError(f"bad metric cutoff in {text!r}") from None
            return MetricSpec("mrr", k, relevance_threshold)
        return MetricSpec("mrr", None, relevance_threshold)
    if low in ("p@1", "p1"):
        return MetricSpec("p1", None, relevance_threshold)
    if low == "map":
        return MetricSpec("map", None, relevance_threshold)
    if low in ("r-prec", "rprec", "r_prec"):
        return MetricSpec("rprec", None, relevance_threshold)
    raise ConfigError(f"unknown metric {text!r}")


@dataclass
class EvalResult:
    per_query: dict[str, float]
    mean: float
    spec: MetricSpec


def _query_metric(run: RunList, relevant: set[str], spec: MetricSpec) -> float:
    if spec.kind == "p1":
        return 1.0 if run.entries and run.entries[0].doc_id in relevant else 0.0
    if spec.kind == "mrr":
        depth = spec.k if spec.k is not None else len(run.entries)
        for entry in run.entries[:depth]:
            if entry.doc_id in relevant:
                return 1.0 / entry.rank
        return 0.0
    if spec.kind == "map":
        hits = 0
        precision_sum = 0.0
        for entry in run.entries:
            if entry.doc_id in relevant:
                hits += 1
                precision_sum += hits / entry.rank
        return precision_sum / len(relevant)
    # rprec
    r = len(relevant)
    top = run.entries[:r]
    return sum(1 for e in top if e.doc_id in relevant) / r


def evaluate(run_lists: dict[str, RunList], qrels: Qrels, spec: MetricSpec) -> EvalResult:
    """Evaluate every run list; returns per-query values and their mean."""
    if not run_lists:
        raise DataError("no run lists to evaluate")
    per_query: dict[str, float] = {}
    averaged: list[float] = []
    for qid in sorted(run_lists):
        relevant = qrels.relevant_docs(qid, spec.relevance_threshold)
        if not relevant:
            if spec.kind in ("mrr", "p1"):
                per_query[qid] = 0.0
                averaged.append(0.0)
            continue
        value = _query_metric(run_lists[qid], relevant, spec)
        per_query[qid] = value
        averaged.append(value)
    mean = float(np.mean(averaged)) if averaged else 0.0
    return EvalResult(per_query=per_query, mean=mean, spec=spec)


@dataclass(frozen=True)
class TTestResult:
    statistic: float
    p_value: float
    degenerate: bool = False


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter = 300
    eps = 1e-14
    fpmin = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    return h


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T_df| >= |t|)."""
    return _betai(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on per-query values.

    Accepts two dicts keyed by query id (key sets must match) or two
    equal-length sequences. All-zero differences give p = 1; constant
    nonzero differences are flagged degenerate with p = 0.
    """
    if isinstance(a, dict) or isinstance(b, dict):
        if not isinstance(a, dict) or not isinstance(b, dict):
            raise DataError("paired_t_test needs two dicts or two sequences")
        if set(a) != set(b):
            raise DataError("paired_t_test requires the same query set on both sides")
        keys = sorted(a)
        xs = np.array([a[k] for k in keys], dtype=np.float64)
        ys = np.array([b[k] for k in keys], dtype=np.float64)
    else:
        xs = np.asarray(a, dtype=np.float64)
        ys = np.asarray(b, dtype=np.float64)
        if xs.shape != ys.shape:
            raise DataError("paired_t_test requires equal-length inputs")
    n = xs.shape[0]
    if n < 2:
        raise DataError("paired_t_test needs at least 2 pairs")
    diff = xs - ys
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        if np.all(diff == 0.0):
            return TTestResult(statistic=0.0, p_value=1.0)
        return TTestResult(
            statistic=math.copysign(math.inf, float(diff[0])), p_value=0.0, degenerate=True
        )
    t = float(diff.mean()) / (sd / math.sqrt(n))
    return TTestResult(statistic=t, p_value=student_t_sf2(t, n - 1))
