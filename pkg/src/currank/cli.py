"""Command-line interface.

Subcommands: ``index``, ``retrieve``, ``eval``, ``synth``, ``train``,
``weights-export``. Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import __version__, config as configmod, kernels
from .curriculum import parse_m
from .difficulty import DifficultyConfig, compute_weights, export_weights
from .errors import ConfigError, CurrankError
from .evalmetrics import evaluate, parse_metric
from .experiments import ExperimentPlan, run_suite, write_suite_artifacts
from .first_stage import (
    AnalyzerConfig,
    BM25Params,
    build_index,
    load_index,
    retrieve,
    save_index,
)
from .synth import SYNTH_ANALYZER, SynthConfig, generate
from .trainer import TrainConfig, prepare
from .trec_io import (
    load_dataset_dir,
    read_corpus,
    read_qrels,
    read_queries,
    read_run_file,
    write_dataset_dir,
    write_run_file,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _analyzer_from(cfg: dict, default: AnalyzerConfig) -> AnalyzerConfig:
    return AnalyzerConfig(
        stem=bool(cfg.get("analyzer.stem", default.stem)),
        stopwords=bool(cfg.get("analyzer.stopwords", default.stopwords)),
    )


def _bm25_from(cfg: dict) -> BM25Params:
    return BM25Params(
        k1=float(cfg.get("bm25.k1", 0.9)),
        b=float(cfg.get("bm25.b", 0.4)),
    )


def _synth_from(cfg: dict, seed_override: int | None) -> SynthConfig:
    kwargs = {}
    for field in dataclasses.fields(SynthConfig):
        key = f"synth.{field.name}"
        if key in cfg:
            kwargs[field.name] = type(field.default)(cfg[key])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return SynthConfig(**kwargs)


def _train_config_from(cfg: dict, loss_mode: str) -> TrainConfig:
    kwargs = {"loss_mode": loss_mode}
    for field in dataclasses.fields(TrainConfig):
        key = f"train.{field.name}"
        if key in cfg:
            value = cfg[key]
            if field.name in ("validation_metric",):
                kwargs[field.name] = str(value)
            elif field.name in ("sample_negatives_from_run",):
                kwargs[field.name] = bool(value)
            elif field.name == "learning_rate":
                kwargs[field.name] = float(value)
            elif field.name != "loss_mode":
                kwargs[field.name] = int(value)
    return TrainConfig(**kwargs)


def _load_cfg(path) -> dict:
    return configmod.load_config(path) if path else {}


def cmd_index(args) -> int:
    cfg = _load_cfg(args.config)
    analyzer = _analyzer_from(cfg, AnalyzerConfig())
    corpus = read_corpus(args.corpus)
    index = build_index(corpus, analyzer)
    save_index(index, args.out)
    print(f"indexed {index.doc_count} documents, {len(index.postings)} terms -> {args.out}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = _load_cfg(args.config)
    params = _bm25_from(cfg)
    index = load_index(args.index)
    queries = read_queries(args.queries)
    runs = {qid: retrieve(index, params, q, args.k) for qid, q in queries.items()}
    write_run_file(runs, args.tag, args.out)
    print(f"retrieved top-{args.k} for {len(runs)} queries -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    runs = read_run_file(args.run)
    qrels = read_qrels(args.qrels)
    spec = parse_metric(args.metric, args.threshold)
    result = evaluate(runs, qrels, spec)
    lines = [f"{qid}\t{value:.6f}" for qid, value in sorted(result.per_query.items())]
    lines.append(f"ALL\t{result.mean:.6f}")
    text = "\n".join(lines)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    print(text)
    return 0


def cmd_synth(args) -> int:
    cfg = _load_cfg(args.config)
    synth_config = _synth_from(cfg, args.seed)
    dataset = generate(synth_config)
    write_dataset_dir(dataset, args.out)
    print(
        f"generated {len(dataset.queries)} queries / {len(dataset.corpus)} docs "
        f"(seed {synth_config.seed}) -> {args.out}"
    )
    return 0


def cmd_weights_export(args) -> int:
    dataset = load_dataset_dir(args.data, args.mode)
    diff_config = DifficultyConfig(args.heuristic, args.mode, anti=args.anti)
    cfg = _load_cfg(args.config)
    analyzer = _analyzer_from(cfg, SYNTH_ANALYZER)
    index = build_index(dataset.corpus, analyzer)
    values = compute_weights(
        diff_config,
        dataset.training_samples,
        dataset.run_lists["train"],
        index=index,
        params=_bm25_from(cfg),
        queries=dataset.queries,
    )
    export_weights(dataset.training_samples, values, args.out)
    print(f"wrote {len(values)} difficulty values -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    loss_mode = str(cfg.get("curriculum.loss_mode", "pairwise"))
    seeds = tuple(int(s) for s in configmod.as_list(cfg.get("seeds", [0])))
    if args.seed is not None:
        seeds = (args.seed,)
    # The singular keys pin one curriculum; the plural forms sweep.
    if "curriculum.heuristic" in cfg:
        heuristics = (str(cfg["curriculum.heuristic"]),)
    else:
        heuristics = tuple(configmod.as_list(cfg.get("curriculum.heuristics", ["recip", "norm", "kde"])))
    if "curriculum.m" in cfg:
        m_grid = (parse_m(cfg["curriculum.m"]),)
    else:
        m_grid = tuple(parse_m(m) for m in configmod.as_list(cfg.get("curriculum.m_grid", [1, 5, 10, 20, 50, 100])))
    anti = bool(cfg.get("curriculum.anti", False))

    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)

    if "data.dir" in cfg:
        dataset = load_dataset_dir(cfg["data.dir"], loss_mode)
        analyzer = _analyzer_from(cfg, AnalyzerConfig())
    elif cfg.get("data.synth", False):
        synth_config = _synth_from(cfg, None)
        dataset = generate(synth_config)
        dataset_dir = os.path.join(out_dir, "dataset")
        write_dataset_dir(dataset, dataset_dir)
        analyzer = _analyzer_from(cfg, SYNTH_ANALYZER)
    else:
        raise ConfigError("experiment config needs data.dir or data.synth = true")

    train_config = _train_config_from(cfg, loss_mode)
    plan = ExperimentPlan(
        loss_mode=loss_mode,
        heuristics=heuristics,
        m_grid=m_grid,
        seeds=seeds,
        train=train_config,
        anti=anti,
    )
    prepared = prepare(dataset, train_config, analyzer=analyzer, bm25_params=_bm25_from(cfg))
    suite = run_suite(None, plan, prepared=prepared, progress=lambda msg: print(f"  {msg}"))
    write_suite_artifacts(suite, prepared, out_dir)
    _write_provenance(cfg, plan, out_dir)

    print(f"tuned m: {suite.tuned_m}; best heuristic: {suite.best_heuristic}")
    print("variant\tm\tmetric_mean\tp_vs_none")
    for row in suite.summary:
        m_text = "-" if row.m is None else ("inf" if row.m == float("inf") else str(int(row.m)))
        p_text = "-" if row.p_vs_none is None else f"{row.p_vs_none:.4g}"
        print(f"{row.variant}\t{m_text}\t{row.metric_mean:.4f}\t{p_text}")
    print(f"artifacts -> {out_dir}")
    return 0


def _write_provenance(cfg: dict, plan: ExperimentPlan, out_dir) -> None:
    path = os.path.join(out_dir, "experiment.resolved.txt")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"currank {__version__} (kernel backend: {kernels.BACKEND})\n")
        handle.write(f"seeds = {','.join(str(s) for s in plan.seeds)}\n")
        handle.write(f"heuristics = {','.join(plan.heuristics)}\n")
        handle.write(f"m_grid = {','.join(str(m) for m in plan.m_grid)}\n")
        handle.write(f"loss_mode = {plan.loss_mode}\n")
        for key in sorted(cfg):
            handle.write(f"{key} = {cfg[key]}\n")


def build_parser() -> _Parser:
    parser = _Parser(prog="currank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a BM25 index from a corpus TSV")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="run BM25 retrieval to a run file")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="bm25")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval", help="evaluate a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--metric", default="mrr@10")
    p.add_argument("--threshold", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic benchmark directory")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the full curriculum experiment suite")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed list")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("weights-export", help="export per-sample difficulty values")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--mode", choices=("pointwise", "pairwise"), required=True)
    p.add_argument("--heuristic", choices=("recip", "norm", "kde"), required=True)
    p.add_argument("--anti", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_weights_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (CurrankError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def console_main() -> None:
    sys.exit(main())
