#!/usr/bin/env python3
"""Full simulated-environment experiment: build a seed-fixed planted-fact
suite, ingest it, train the reward estimator on the train split, run every
method (plus the uniform-random control) on the test split, and print one
accuracy row per method.

    python scripts/run_simulated_benchmark.py --train 100 --test 200 --seed 77
"""

from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

from thoughtsearch import simenv
from thoughtsearch.config import default_config
from thoughtsearch.generate import SimulatedGenerator
from thoughtsearch.harness import (
    EnginePorts,
    Method,
    example_search_ports,
    report_to_csv,
    run_benchmark,
)
from thoughtsearch.mcts import random_search
from thoughtsearch.retrieval import HashedEmbedder, ingest_corpus
from thoughtsearch.scoring import collect_offline_dataset, train_estimator
from thoughtsearch.templates import TemplateSet


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", type=int, default=100)
    parser.add_argument("--test", type=int, default=200)
    parser.add_argument("--seed", type=int, default=77)
    parser.add_argument("--out", default=None, help="directory for per-method CSVs")
    args = parser.parse_args()

    suite = simenv.build_suite(n_train=args.train, n_test=args.test, seed=args.seed)
    with tempfile.TemporaryDirectory() as tmp:
        corpus = Path(tmp) / "corpus.jsonl"
        simenv.write_records(suite.records, corpus)
        index = ingest_corpus(corpus, chunk_size=100, dim=256)

    config = default_config("simulated")
    ports = EnginePorts(
        generator=SimulatedGenerator(),
        templates=TemplateSet.builtin("simulated"),
        index=index,
    )

    print(f"suite: {args.train} train / {args.test} test, {len(index.documents)} chunks")
    embedder = HashedEmbedder(dim=config.scoring.embed_dim)
    samples = collect_offline_dataset(
        suite.train,
        lambda ex, rng: example_search_ports(Method.MCTS_ORACLE, ex, ports, config),
        config.episode(stop_threshold=config.stop_thresholds["oracle"]),
        embedder,
        seed=config.seed,
    )
    model = train_estimator(
        samples,
        holdout_fraction=config.scoring.holdout_fraction,
        regressor_config=config.scoring.regressor_config(),
        embedder_id=embedder.embedder_id,
        seed=config.seed,
    )
    ports.scorer_model = model
    ports.scoring_embedder = embedder
    rep = model.training_report
    print(
        f"estimator: {rep['sample_count']} samples, "
        f"holdout_mse={rep['holdout_mse']:.4f}, threshold={model.threshold:.3f}\n"
    )

    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    print(f"{'method':<24} {'accuracy':>8} {'thoughts':>9} {'llm calls':>10} {'secs':>6}")
    rows = [(method.value, method, None) for method in Method]
    rows.append(("random_control", Method.MCTS_ORACLE, random_search))
    for name, method, search_fn in rows:
        start = time.perf_counter()
        report = run_benchmark(suite.test, method, ports, config, search_fn=search_fn)
        elapsed = time.perf_counter() - start
        n = len(report.per_example)
        mean_thoughts = sum(r.thought_count for r in report.per_example) / n
        mean_calls = sum(r.generator_calls for r in report.per_example) / n
        print(
            f"{name:<24} {report.aggregate:>8.3f} {mean_thoughts:>9.2f} "
            f"{mean_calls:>10.2f} {elapsed:>6.1f}"
        )
        if outdir:
            (outdir / f"{name}.csv").write_text(report_to_csv(report), encoding="utf-8")
    if outdir:
        print(f"\nper-method CSVs in {outdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
