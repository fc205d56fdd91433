"""Multi-variant, multi-seed experiment runs with a summary table.

For each heuristic, the end-of-curriculum iteration m is tuned on the
validation split over a grid (one training run per (heuristic, m, seed)).
The summary compares, per seed, the no-curriculum baseline, each tuned
heuristic, the anti-curriculum of the best heuristic, and its static
(m = inf) variant, all on the test split, with a paired t-test against
the baseline pooled over (seed, query).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

from .curriculum import CurriculumSchedule
from .difficulty import DifficultyConfig
from .errors import ConfigError, DataError
from .evalmetrics import paired_t_test
from .trainer import (
    Prepared,
    TrainConfig,
    TrainResult,
    prepare,
    train,
    write_history_csv,
)
from .trec_io import Dataset, write_run_file

SUMMARY_COLUMNS = ("variant", "m", "metric_mean", "metric_per_seed", "p_vs_none")


@dataclass(frozen=True)
class ExperimentPlan:
    loss_mode: str = "pairwise"
    heuristics: tuple = ("recip", "norm", "kde")
    m_grid: tuple = (1, 5, 10, 20, 50, 100)
    seeds: tuple = tuple(range(10))
    train: TrainConfig = field(default_factory=TrainConfig)
    anti: bool = False  # train the heuristic variants with 1 - D

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if not self.m_grid:
            raise ConfigError("m grid must be non-empty")
        if not self.heuristics:
            raise ConfigError("heuristic list must be non-empty")


@dataclass
class RunRecord:
    variant: str
    heuristic: str | None
    m: float | None
    seed: int
    result: TrainResult
    test_mean: float
    test_per_query: dict[str, float]


@dataclass
class SummaryRow:
    variant: str
    m: float | None
    metric_mean: float
    metric_per_seed: list[float]
    p_vs_none: float | None


@dataclass
class SuiteResult:
    plan: ExperimentPlan
    records: list[RunRecord]
    tuned_m: dict[str, float]  # heuristic -> tuned m
    best_heuristic: str
    summary: list[SummaryRow]

    def runs(self, variant: str, m: float | None = None) -> list[RunRecord]:
        out = [
            r
            for r in self.records
            if r.variant == variant and (m is None or r.m == m)
        ]
        return sorted(out, key=lambda r: r.seed)


def _run_one(
    prepared: Prepared,
    plan: ExperimentPlan,
    variant: str,
    heuristic: str | None,
    m: float | None,
    anti: bool,
    seed: int,
) -> RunRecord:
    config = replace(plan.train, seed=seed, loss_mode=plan.loss_mode)
    if heuristic is None:
        schedule = None
    else:
        schedule = CurriculumSchedule(
            m=m, difficulty=DifficultyConfig(heuristic, plan.loss_mode, anti=anti)
        )
    result = train(None, schedule, config, prepared=prepared)
    if prepared.test_eval is None:
        raise DataError("dataset has no test run lists")
    per_query, mean = prepared.test_eval.evaluate(result.best_model, config.metric_spec())
    return RunRecord(
        variant=variant,
        heuristic=heuristic,
        m=m,
        seed=seed,
        result=result,
        test_mean=mean,
        test_per_query=per_query,
    )


def _pooled_per_query(records: list[RunRecord]) -> list[float]:
    values = []
    for record in sorted(records, key=lambda r: r.seed):
        for qid in sorted(record.test_per_query):
            values.append(record.test_per_query[qid])
    return values


def run_suite(
    dataset: Dataset | None,
    plan: ExperimentPlan,
    prepared: Prepared | None = None,
    progress=None,
) -> SuiteResult:
    if prepared is None:
        if dataset is None:
            raise DataError("run_suite needs a dataset or a prepared bundle")
        base_config = replace(plan.train, loss_mode=plan.loss_mode)
        prepared = prepare(dataset, base_config)

    def note(message):
        if progress is not None:
            progress(message)

    records: list[RunRecord] = []

    note("training baseline (no curriculum)")
    for seed in plan.seeds:
        records.append(_run_one(prepared, plan, "none", None, None, False, seed))

    for heuristic in plan.heuristics:
        for m in plan.m_grid:
            note(f"training {heuristic}, m={m}")
            for seed in plan.seeds:
                records.append(
                    _run_one(prepared, plan, heuristic, heuristic, m, plan.anti, seed)
                )

    # Tune m per heuristic on mean validation value across seeds; ties
    # prefer the smaller m. The best heuristic is tuned the same way.
    tuned_m: dict[str, float] = {}
    tuned_valid: dict[str, float] = {}
    for heuristic in plan.heuristics:
        best_m, best_value = None, -math.inf
        for m in sorted(plan.m_grid):
            values = [
                r.result.best_value
                for r in records
                if r.variant == heuristic and r.m == m
            ]
            mean_value = sum(values) / len(values)
            if mean_value > best_value:
                best_m, best_value = m, mean_value
        tuned_m[heuristic] = best_m
        tuned_valid[heuristic] = best_value
    best_heuristic = max(plan.heuristics, key=lambda h: tuned_valid[h])
    best_m = tuned_m[best_heuristic]

    # Ablations of the tuned configuration: the flipped difficulty
    # function, and the never-converging (m = inf) schedule.
    note(f"training anti-curriculum ({best_heuristic}, m={best_m})")
    for seed in plan.seeds:
        records.append(
            _run_one(
                prepared, plan, f"anti_{best_heuristic}", best_heuristic, best_m,
                not plan.anti, seed,
            )
        )
    note(f"training static weighting ({best_heuristic}, m=inf)")
    for seed in plan.seeds:
        records.append(
            _run_one(
                prepared, plan, f"static_{best_heuristic}", best_heuristic, math.inf,
                plan.anti, seed,
            )
        )

    none_records = [r for r in records if r.variant == "none"]
    none_pool = _pooled_per_query(none_records)
    summary: list[SummaryRow] = []

    def add_row(variant, m, rows):
        per_seed = [r.test_mean for r in sorted(rows, key=lambda r: r.seed)]
        p_value = None
        if variant != "none":
            p_value = paired_t_test(_pooled_per_query(rows), none_pool).p_value
        summary.append(
            SummaryRow(
                variant=variant,
                m=m,
                metric_mean=sum(per_seed) / len(per_seed),
                metric_per_seed=per_seed,
                p_vs_none=p_value,
            )
        )

    add_row("none", None, none_records)
    for heuristic in plan.heuristics:
        add_row(
            heuristic,
            tuned_m[heuristic],
            [r for r in records if r.variant == heuristic and r.m == tuned_m[heuristic]],
        )
    add_row(
        f"anti_{best_heuristic}",
        best_m,
        [r for r in records if r.variant == f"anti_{best_heuristic}"],
    )
    add_row(
        f"static_{best_heuristic}",
        math.inf,
        [r for r in records if r.variant == f"static_{best_heuristic}"],
    )

    return SuiteResult(
        plan=plan,
        records=records,
        tuned_m=tuned_m,
        best_heuristic=best_heuristic,
        summary=summary,
    )


def _format_m(m) -> str:
    if m is None:
        return "-"
    if math.isinf(m):
        return "inf"
    return str(int(m))


def write_summary(summary: list[SummaryRow], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\t".join(SUMMARY_COLUMNS) + "\n")
        for row in summary:
            per_seed = ",".join(f"{v:.6f}" for v in row.metric_per_seed)
            p_text = "-" if row.p_vs_none is None else f"{row.p_vs_none:.6g}"
            handle.write(
                f"{row.variant}\t{_format_m(row.m)}\t{row.metric_mean:.6f}\t"
                f"{per_seed}\t{p_text}\n"
            )


def write_suite_artifacts(suite: SuiteResult, prepared: Prepared, out_dir) -> None:
    """Per-run histories, checkpoints, re-ranked test runs, and the summary."""
    os.makedirs(out_dir, exist_ok=True)
    write_summary(suite.summary, os.path.join(out_dir, "summary.tsv"))
    with open(os.path.join(out_dir, "m_grid.tsv"), "w", encoding="utf-8") as handle:
        handle.write("heuristic\tm\tseed\tvalidation_value\n")
        for record in suite.records:
            if record.variant in suite.plan.heuristics:
                handle.write(
                    f"{record.heuristic}\t{_format_m(record.m)}\t{record.seed}\t"
                    f"{record.result.best_value:.6f}\n"
                )
    for record in suite.records:
        run_dir = os.path.join(
            out_dir, "runs", record.variant, f"m{_format_m(record.m)}", f"seed{record.seed}"
        )
        os.makedirs(run_dir, exist_ok=True)
        write_history_csv(record.result.history, os.path.join(run_dir, "history.csv"))
        record.result.best_model.save(os.path.join(run_dir, "model.ckpt"))
        runs = prepared.test_eval.rerank(record.result.best_model)
        write_run_file(runs, f"{record.variant}", os.path.join(run_dir, "run.test.txt"))
        with open(os.path.join(run_dir, "test_per_query.tsv"), "w", encoding="utf-8") as handle:
            for qid in sorted(record.test_per_query):
                handle.write(f"{qid}\t{record.test_per_query[qid]:.6f}\n")
