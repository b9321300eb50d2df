"""Command-line surface binding every stage into reproducible batch pipelines."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import config as cfg
from .corpus import IngestError, ingest_corpus, load_samples, write_corpus_jsonl, write_samples_jsonl
from .episode import read_results_jsonl, run_dataset, write_results_jsonl
from .eval import (
    evaluate_run,
    format_report,
    mcnemar_from_reports,
    read_report_json,
    write_report_json,
)
from .index import build_index
from .reasoner import PolicyParams, export_sft_records
from .synth import TWO_HOP_NUM_BUCKETS, TWO_HOP_TEMPLATES, build_two_hop_task
from .trainer import save_policy, train_toy_questioner, write_curve_csv


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (IngestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imloop", description=__doc__)
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("ingest", help="validate a corpus and optionally convert it to JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", default="jsonl", choices=["jsonl", "hotpotqa-json"])
    p.add_argument("--samples", default="", help="optional samples JSONL to validate against the corpus")
    p.add_argument("--out-dir", default="", help="write normalized corpus.jsonl/samples.jsonl here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-index", help="embed a corpus and persist the vector index")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="", help="index file (defaults to config.index.path)")
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("run", help="run episodes over a dataset and write transcripts + report")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="")
    p.add_argument("--mode", default="", choices=["", "train", "infer"])
    p.add_argument("--parallelism", type=int, default=0)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("train-toy", help="train the template-policy questioner")
    p.add_argument("--config", default="", help="config with corpus/samples and templates")
    p.add_argument("--synthetic", action="store_true", help="use the built-in two-hop task")
    p.add_argument("--out-dir", default="runs/toy")
    p.add_argument("--iterations", type=int, default=0)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("export-sft", help="convert transcripts to instruction-tuning JSONL")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_sft)

    p = sub.add_parser("eval", help="score a transcripts file against its samples")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--report", default="", help="write the full report JSON here")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mcnemar", help="paired significance test between two report files")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=_cmd_mcnemar)

    p = sub.add_parser("ablate", help="rewrite a config with an ablation preset applied")
    p.add_argument("preset", choices=list(cfg.ABLATION_PRESETS))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    return parser


def _cmd_ingest(args) -> int:
    store = ingest_corpus(args.corpus, args.format)
    samples = store.samples
    if args.samples:
        samples = load_samples(args.samples, store)
        store = store.with_samples(samples)
    print(f"passages {len(store)}")
    print(f"samples {len(samples)}")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_corpus_jsonl(store, out / "corpus.jsonl")
        write_samples_jsonl(samples, out / "samples.jsonl")
        print(f"wrote {out / 'corpus.jsonl'} and {out / 'samples.jsonl'}")
    return 0


def _cmd_build_index(args) -> int:
    config = cfg.load_config(args.config)
    out = args.out or config.index.path
    if not out:
        raise cfg.ConfigError("config.index.path: required (or pass --out)")
    store = cfg.load_store(config)
    provider = cfg.build_provider(config.provider)
    index = build_index(
        store,
        provider,
        variant=config.index.variant,
        num_clusters=config.index.num_clusters,
        num_probes=config.index.num_probes,
        seed=config.seed,
    )
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    index.save(out)
    print(f"indexed {len(index)} passages ({config.index.variant}) -> {out}")
    return 0


def _cmd_run(args) -> int:
    config = cfg.load_config(args.config)
    if args.mode:
        config = dataclasses.replace(
            config, episode=dataclasses.replace(config.episode, mode=args.mode)
        )
    if args.parallelism:
        config = dataclasses.replace(config, parallelism=args.parallelism)
    out_dir = Path(args.out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    store = cfg.load_store(config)
    pipeline = cfg.build_pipeline(config, store)
    backends = cfg.build_backends(config)
    stamp = cfg.fingerprint(config)

    results = run_dataset(store.samples, backends, pipeline, config.episode, config.parallelism)
    write_results_jsonl(out_dir / "transcripts.jsonl", results, fingerprint=stamp)

    scored = [s for s in store.samples if s.gold_answer and s.gold_support]
    if len(scored) == len(store.samples) and scored:
        report = evaluate_run(results, store.samples, fingerprint=stamp)
        write_report_json(out_dir / "report.json", report)
        print(format_report(report))
    else:
        print(f"episodes {len(results)} (no gold labels; skipping metrics)")
    failures = sum(1 for r in results if r.error)
    if failures:
        print(f"failed episodes {failures}")
    print(f"fingerprint {stamp}")
    print(f"wrote {out_dir / 'transcripts.jsonl'}")
    return 0


def _cmd_train_toy(args) -> int:
    if not args.synthetic and not args.config:
        raise cfg.ConfigError("train-toy needs --config or --synthetic")
    if args.synthetic:
        config = cfg.AppConfig(
            refiner=cfg.RefinerConfig(kind="lexical", top_k=5),
            episode=dataclasses.replace(cfg.EpisodeConfig(), switch_threshold=1.8),
            questioner=cfg.QuestionerConfig(kind="template-policy", templates=TWO_HOP_TEMPLATES),
        )
        store = build_two_hop_task()
        templates = TWO_HOP_TEMPLATES
        num_buckets = TWO_HOP_NUM_BUCKETS
    else:
        config = cfg.load_config(args.config)
        if config.questioner.kind != "template-policy" or not config.questioner.templates:
            raise cfg.ConfigError("config.questioner: train-toy needs template-policy with templates")
        store = cfg.load_store(config)
        templates = config.questioner.templates
        num_buckets = max(2, config.episode.max_turns - 1)
    if args.iterations:
        config = dataclasses.replace(
            config, trainer=dataclasses.replace(config.trainer, iterations=args.iterations)
        )

    pipeline = cfg.build_pipeline(config, store)
    answerer = cfg.build_answerer(config.answerer)
    params0 = PolicyParams.uniform(num_buckets, templates)
    params, curve = train_toy_questioner(
        store.samples, params0, answerer, pipeline, config.trainer, config.episode
    )

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_policy(out_dir / "policy.json", params)
    write_curve_csv(out_dir / "curve.csv", curve)
    print(f"iterations {len(curve)}")
    print(f"mean reward {curve[0].mean_reward:.3f} -> {curve[-1].mean_reward:.3f}")
    print(f"wrote {out_dir / 'policy.json'} and {out_dir / 'curve.csv'}")
    return 0


def _cmd_export_sft(args) -> int:
    _, results = read_results_jsonl(args.transcripts)
    samples = load_samples(args.samples)
    count = export_sft_records([r.transcript for r in results], samples, args.out)
    print(f"wrote {count} records -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    stamp, results = read_results_jsonl(args.transcripts)
    samples = load_samples(args.samples)
    report = evaluate_run(results, samples, fingerprint=stamp)
    print(format_report(report))
    if args.report:
        write_report_json(args.report, report)
        print(f"wrote {args.report}")
    return 0


def _cmd_mcnemar(args) -> int:
    result = mcnemar_from_reports(read_report_json(args.report_a), read_report_json(args.report_b))
    print(f"b {result.b}")
    print(f"c {result.c}")
    print(f"p {result.p_value:.6g}")
    print(f"significant {'yes' if result.significant else 'no'} ({result.method})")
    return 0


def _cmd_ablate(args) -> int:
    config = cfg.load_config(args.config)
    ablated = cfg.apply_ablation(config, args.preset)
    cfg.save_config(args.out, ablated)
    print(f"wrote {args.out} ({args.preset})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
