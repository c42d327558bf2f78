"""Benchmark harness: method dispatch, report audit, loaders, determinism."""

from __future__ import annotations


import pytest

from thoughtsearch import simenv
from thoughtsearch.config import default_config
from thoughtsearch.errors import EngineError
from thoughtsearch.generate import SimulatedGenerator
from thoughtsearch.harness import (
    EnginePorts,
    Method,
    QAExample,
    Task,
    accuracy_vs_size_curve,
    example_search_ports,
    extract_answer,
    load_examples,
    report_to_csv,
    run_benchmark,
)
from thoughtsearch.mcts import random_search
from thoughtsearch.retrieval import HashedEmbedder, ingest_corpus
from thoughtsearch.scoring import collect_offline_dataset, train_estimator
from thoughtsearch.templates import TemplateSet
from tests.conftest import write_jsonl


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    """Small seed-fixed suite shared by the harness tests."""
    tmp = tmp_path_factory.mktemp("sim")
    suite = simenv.build_suite(n_train=30, n_test=30, seed=77)
    simenv.write_records(suite.records, tmp / "corpus.jsonl")
    index = ingest_corpus(tmp / "corpus.jsonl", chunk_size=100, dim=256)
    config = default_config("simulated")
    ports = EnginePorts(
        generator=SimulatedGenerator(),
        templates=TemplateSet.builtin("simulated"),
        index=index,
    )
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
        holdout_fraction=0.2,
        regressor_config=config.scoring.regressor_config(),
        embedder_id=embedder.embedder_id,
        seed=config.seed,
    )
    ports.scorer_model = model
    ports.scoring_embedder = embedder
    return suite, ports, config


def test_llm_only_scores_zero_on_two_hop(sim):
    suite, ports, config = sim
    report = run_benchmark(suite.test, Method.LLM_ONLY, ports, config)
    assert report.aggregate == 0.0
    assert all(r.generator_calls == 1 for r in report.per_example)


def test_report_audit_aggregate_matches_rows(sim):
    suite, ports, config = sim
    report = run_benchmark(suite.test, Method.MCTS_ORACLE, ports, config)
    assert report.aggregate == report.recompute_aggregate()
    assert sorted(r.query_id for r in report.per_example) == [
        e.query_id for e in sorted(suite.test, key=lambda e: e.query_id)
    ]


def test_baseline_ordering_on_simulated_tasks(sim):
    suite, ports, config = sim
    oracle = run_benchmark(suite.test, Method.MCTS_ORACLE, ports, config)
    greedy = run_benchmark(suite.test, Method.GREEDY_ESTIMATION, ports, config)
    llm = run_benchmark(suite.test, Method.LLM_ONLY, ports, config)
    assert oracle.aggregate >= greedy.aggregate >= llm.aggregate
    assert llm.aggregate == 0.0


def test_oracle_beats_random_control(sim):
    suite, ports, config = sim
    oracle = run_benchmark(suite.test, Method.MCTS_ORACLE, ports, config)
    control = run_benchmark(
        suite.test, Method.MCTS_ORACLE, ports, config, search_fn=random_search
    )
    assert oracle.aggregate > control.aggregate


def test_no_ir_ablation_has_no_documents(sim):
    suite, ports, config = sim
    report = run_benchmark(suite.test[:5], Method.MCTS_ORACLE_NO_IR, ports, config)
    # Facts only exist in documents, so the ablation cannot answer.
    assert report.aggregate == 0.0
    assert all(r.thought_count == config.max_steps for r in report.per_example)


def test_rag_answers_one_hop_when_doc_suffices(tmp_path):
    records = [
        {"source_id": "s0", "filter_key": "t", "text": "entry k7 has:k7 fact:k7=v42 filler"},
        {"source_id": "s1", "filter_key": "t", "text": "entry other filler words here"},
    ]
    index = ingest_corpus(write_jsonl(tmp_path / "c.jsonl", records), chunk_size=100, dim=128)
    config = default_config("simulated")
    ports = EnginePorts(
        generator=SimulatedGenerator(),
        templates=TemplateSet.builtin("simulated"),
        index=index,
    )
    example = QAExample(
        query_id="one-hop",
        query="need:k7 what figure is recorded for k7",
        gold_answers=["v42"],
        task=Task.SIMULATED_FACT,
        filter_key="t",
    )
    report = run_benchmark([example], Method.RAG, ports, config)
    assert report.aggregate == 1.0


def test_per_example_failure_is_recorded_not_raised(sim):
    suite, ports, config = sim

    class ExplodingScorer:
        def score(self, graph, node_id, generator):
            raise EngineError("scorer down")

    import thoughtsearch.harness as harness_mod

    original = harness_mod.make_scorer

    def broken_make_scorer(method, example, ports_, config_):
        if example.query_id == suite.test[0].query_id:
            return ExplodingScorer()
        return original(method, example, ports_, config_)

    harness_mod.make_scorer = broken_make_scorer
    try:
        report = run_benchmark(suite.test[:3], Method.MCTS_ORACLE, ports, config)
    finally:
        harness_mod.make_scorer = original
    failed = [r for r in report.per_example if r.error]
    assert len(failed) == 1
    assert failed[0].correct == 0
    assert len(report.per_example) == 3


def test_curve_rows_and_call_linearity(sim):
    suite, ports, config = sim
    reports = []
    for t in (2, 5, 10):
        cfg = default_config("simulated")
        cfg.max_steps = t
        reports.append(run_benchmark(suite.test[:10], Method.MCTS_ORACLE, ports, cfg))
    rows = accuracy_vs_size_curve(reports)
    assert [row["max_thoughts"] for row in rows] == [2, 5, 10]
    assert all(0.0 <= row["accuracy"] <= 1.0 for row in rows)
    # More budget never means fewer generator calls on average.
    calls = [row["mean_generator_calls"] for row in rows]
    assert calls[0] <= calls[1] <= calls[2]


def test_workers_do_not_change_results(sim):
    suite, ports, config = sim
    serial = run_benchmark(suite.test[:8], Method.MCTS_ORACLE, ports, config)
    cfg = default_config("simulated")
    cfg.workers = 4
    parallel = run_benchmark(suite.test[:8], Method.MCTS_ORACLE, ports, cfg)
    assert report_to_csv(serial) == report_to_csv(parallel)


def test_rerun_is_byte_identical(sim):
    suite, ports, config = sim
    a = report_to_csv(run_benchmark(suite.test[:8], Method.MCTS_ESTIMATION, ports, config))
    b = report_to_csv(run_benchmark(suite.test[:8], Method.MCTS_ESTIMATION, ports, config))
    assert a == b


def test_extract_answer_per_task():
    assert extract_answer(Task.BOOLEAN, "I think 1 is right") == "1"
    assert extract_answer(Task.BOOLEAN, "no digits") == ""
    assert extract_answer(Task.EXTRACTIVE_MG, "Take 12.5 mg") == "12.5 mg"
    assert extract_answer(Task.SIMULATED_FACT, "v1 v2") == "v1 v2"


def test_load_examples_loaders(tmp_path):
    records = [
        {"id": "a", "query": "q1", "answers": ["true"], "task": "boolean", "split": "train"},
        {"id": "b", "query": "q2", "answers": "no", "task": "boolean"},
        {"id": "c", "query": "q3", "answers": ["30 mg"], "task": "extractive_mg"},
        {"id": "d", "query": "q4", "answers": ["thirty"], "task": "extractive_mg"},
        {"id": "e", "query": "q5", "answers": ["v1"], "task": "simulated_fact", "filter_key": "t5"},
    ]
    path = write_jsonl(tmp_path / "examples.jsonl", records)
    examples = load_examples(path)
    assert [e.query_id for e in examples] == ["a", "b", "c", "d", "e"]
    assert examples[0].gold_answers == ["1"]
    assert examples[1].gold_answers == ["0"]
    assert load_examples(path, split="train")[0].query_id == "a"
    mg_only = load_examples(path, mg_answers_only=True)
    assert [e.query_id for e in mg_only if e.task == Task.EXTRACTIVE_MG] == ["c"]
    assert load_examples(path, limit=2) == examples[:2]
