"""Benchmark runner.

Executes one of seven methods per QA example: two single-shot baselines
(closed-book LLM, one-document RAG), the bandit planner under three scoring
models, the no-retrieval ablation, and the greedy estimator planner. Parses
answers per task, applies the task metric, and emits per-example rows plus
the aggregate. Rows are keyed by query id so concurrent execution assembles
an order-independent report.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from .config import EngineConfig
from .errors import ConfigError, EngineError
from .generate import CountingGenerator, Generator
from .metrics import best_token_f1, exact_match, parse_boolean, parse_quantity_mg
from .mcts import (
    RetrieverPorts,
    SearchOutcome,
    SearchPorts,
    greedy_search,
    run_search,
)
from .retrieval import CorpusIndex, DocumentQueue, retrieve
from .scoring import EstimatorScorer, OracleScorer, ScorerModel, SelfCriticScorer
from .seeding import rng_from
from .templates import TemplateSet

log = logging.getLogger(__name__)


class Task(str, Enum):
    BOOLEAN = "boolean"
    EXTRACTIVE_MG = "extractive_mg"
    SIMULATED_FACT = "simulated_fact"


class Method(str, Enum):
    LLM_ONLY = "llm_only"
    RAG = "rag"
    MCTS_ORACLE = "mcts_oracle"
    MCTS_ORACLE_NO_IR = "mcts_oracle_no_ir"
    MCTS_SELF_CRITIC = "mcts_self_critic"
    MCTS_ESTIMATION = "mcts_estimation"
    GREEDY_ESTIMATION = "greedy_estimation"


PLANNER_METHODS = {
    Method.MCTS_ORACLE,
    Method.MCTS_ORACLE_NO_IR,
    Method.MCTS_SELF_CRITIC,
    Method.MCTS_ESTIMATION,
    Method.GREEDY_ESTIMATION,
}


@dataclass(frozen=True)
class QAExample:
    query_id: str
    query: str
    gold_answers: list[str]
    task: Task
    filter_key: str | None = None
    split: str = "test"

    def __post_init__(self):
        if not self.gold_answers:
            raise ConfigError(f"example {self.query_id}: gold_answers must be non-empty")
        if self.task == Task.BOOLEAN and any(
            gold not in ("0", "1") for gold in self.gold_answers
        ):
            raise ConfigError(
                f"example {self.query_id}: boolean gold answers must be '0' or '1'"
            )


@dataclass
class ExampleResult:
    query_id: str
    correct: int
    thought_count: int
    generator_calls: int
    scorer_calls: int
    terminated_by: str = ""
    answer: str = ""
    error: str = ""


@dataclass
class BenchmarkReport:
    method: Method
    per_example: list[ExampleResult]
    aggregate: float
    max_steps: int

    def recompute_aggregate(self) -> float:
        if not self.per_example:
            return 0.0
        return sum(r.correct for r in self.per_example) / len(self.per_example)


@dataclass
class EnginePorts:
    """Shared, search-safe resources the benchmark wires per example."""

    generator: Generator
    templates: TemplateSet
    index: CorpusIndex | None = None
    scorer_model: ScorerModel | None = None
    scoring_embedder: object | None = None


def extract_answer(task: Task, completion: str) -> str:
    """Map a raw completion into the task's answer space ('' when unparsable)."""
    if task == Task.BOOLEAN:
        return parse_boolean(completion) or ""
    if task == Task.EXTRACTIVE_MG:
        return parse_quantity_mg(completion) or ""
    return completion


def grade(task: Task, prediction: str, gold_answers: list[str]) -> int:
    return exact_match(prediction, gold_answers)


def oracle_metric_for(config: EngineConfig) -> Callable[[str, list[str]], float]:
    if config.scoring.oracle_metric == "token_f1":
        return best_token_f1
    return lambda pred, golds: float(exact_match(pred, golds))


def make_scorer(method: Method, example: QAExample, ports: EnginePorts, config: EngineConfig):
    if method in (Method.MCTS_ORACLE, Method.MCTS_ORACLE_NO_IR):
        parse = None
        if example.task in (Task.BOOLEAN, Task.EXTRACTIVE_MG):
            parse = lambda raw: extract_answer(example.task, raw)
        return OracleScorer(example.gold_answers, oracle_metric_for(config), parse)
    if method == Method.MCTS_SELF_CRITIC:
        return SelfCriticScorer(ports.templates)
    if method in (Method.MCTS_ESTIMATION, Method.GREEDY_ESTIMATION):
        if ports.scorer_model is None or ports.scoring_embedder is None:
            raise ConfigError(f"method {method.value} requires a trained scorer model")
        return EstimatorScorer(ports.scorer_model, ports.scoring_embedder)
    raise ConfigError(f"method {method.value} has no scorer")


def _stop_threshold(method: Method, config: EngineConfig) -> float:
    kind = {
        Method.MCTS_ORACLE: "oracle",
        Method.MCTS_ORACLE_NO_IR: "oracle",
        Method.MCTS_SELF_CRITIC: "self_critic",
        Method.MCTS_ESTIMATION: "estimation",
        Method.GREEDY_ESTIMATION: "estimation",
    }[method]
    return config.stop_thresholds[kind]


def example_search_ports(
    method: Method, example: QAExample, ports: EnginePorts, config: EngineConfig
) -> SearchPorts:
    """Assemble per-example search ports: fresh queue, method-specific scorer."""
    retriever = None
    if method != Method.MCTS_ORACLE_NO_IR and ports.index is not None:
        retriever = RetrieverPorts(
            index=ports.index,
            queue=DocumentQueue(
                batch_size=config.doc_batch_size, filter_key=example.filter_key
            ),
            query_mode=config.retrieval.query_mode,
        )
    return SearchPorts(
        generator=ports.generator,
        scorer=make_scorer(method, example, ports, config),
        retriever=retriever,
    )


def run_example(
    method: Method,
    example: QAExample,
    ports: EnginePorts,
    config: EngineConfig,
    rng,
    search_fn: Callable[..., SearchOutcome] | None = None,
    trace_sink: Callable[[QAExample, SearchOutcome], None] | None = None,
) -> ExampleResult:
    """One example end to end: search (if the method plans), answer, grade.

    search_fn overrides the planner (experiments use random_search as a
    uniform-pairing control)."""
    generator = CountingGenerator(ports.generator)
    if method in (Method.LLM_ONLY, Method.RAG):
        context = None
        if method == Method.RAG and ports.index is not None:
            docs = retrieve(ports.index, example.query, k=1, filter_key=example.filter_key)
            context = docs[0].text if docs else None
        raw = generator.answer(example.query, context)
        pred = extract_answer(example.task, raw)
        return ExampleResult(
            query_id=example.query_id,
            correct=grade(example.task, pred, example.gold_answers),
            thought_count=0,
            generator_calls=generator.calls,
            scorer_calls=0,
            answer=pred,
        )

    search_ports = example_search_ports(method, example, ports, config)
    episode = config.episode(stop_threshold=_stop_threshold(method, config))
    if search_fn is None:
        search_fn = greedy_search if method == Method.GREEDY_ESTIMATION else run_search
    outcome = search_fn(example.query, search_ports, episode, rng)
    if trace_sink is not None:
        trace_sink(example, outcome)
    best_text = outcome.graph.node(outcome.best_thought).text
    raw = generator.answer(example.query, best_text)
    pred = extract_answer(example.task, raw)
    return ExampleResult(
        query_id=example.query_id,
        correct=grade(example.task, pred, example.gold_answers),
        thought_count=outcome.graph.generated_count,
        generator_calls=outcome.generator_calls + generator.calls,
        scorer_calls=outcome.scorer_calls,
        terminated_by=outcome.terminated_by.value,
        answer=pred,
    )


def run_benchmark(
    examples: list[QAExample],
    method: Method,
    ports: EnginePorts,
    config: EngineConfig,
    search_fn: Callable[..., SearchOutcome] | None = None,
    trace_sink: Callable[[QAExample, SearchOutcome], None] | None = None,
) -> BenchmarkReport:
    """Run one method over a dataset. Per-example failures are recorded as
    incorrect with an error tag and never abort the run."""

    def worker(idx_example: tuple[int, QAExample]) -> ExampleResult:
        idx, example = idx_example
        rng = rng_from(config.seed, idx)
        try:
            return run_example(method, example, ports, config, rng, search_fn, trace_sink)
        except EngineError as exc:
            log.warning("example %s failed: %s", example.query_id, exc)
            return ExampleResult(
                query_id=example.query_id,
                correct=0,
                thought_count=0,
                generator_calls=0,
                scorer_calls=0,
                error=str(exc),
            )

    indexed = list(enumerate(examples))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(worker, indexed))
    else:
        results = [worker(item) for item in indexed]
    results.sort(key=lambda r: r.query_id)
    report = BenchmarkReport(
        method=method, per_example=results, aggregate=0.0, max_steps=config.max_steps
    )
    report.aggregate = report.recompute_aggregate()
    return report


def accuracy_vs_size_curve(reports: list[BenchmarkReport]) -> list[dict]:
    """One row per thought budget: accuracy and mean generator calls."""
    rows = []
    for report in sorted(reports, key=lambda r: r.max_steps):
        n = len(report.per_example)
        mean_calls = (
            sum(r.generator_calls for r in report.per_example) / n if n else 0.0
        )
        rows.append(
            {
                "max_thoughts": report.max_steps,
                "accuracy": report.aggregate,
                "mean_generator_calls": mean_calls,
            }
        )
    return rows


def report_to_csv(report: BenchmarkReport) -> str:
    lines = ["query_id,correct,thought_count,generator_calls,scorer_calls,terminated_by,answer,error"]
    for r in report.per_example:
        answer = r.answer.replace(",", ";").replace("\n", " ")
        error = r.error.replace(",", ";").replace("\n", " ")
        lines.append(
            f"{r.query_id},{r.correct},{r.thought_count},{r.generator_calls},"
            f"{r.scorer_calls},{r.terminated_by},{answer},{error}"
        )
    return "\n".join(lines) + "\n"


def curve_to_csv(rows: list[dict]) -> str:
    lines = ["max_thoughts,accuracy,mean_generator_calls"]
    for row in rows:
        lines.append(
            f"{row['max_thoughts']},{row['accuracy']},{row['mean_generator_calls']}"
        )
    return "\n".join(lines) + "\n"


def load_examples(
    path: str | Path,
    split: str | None = None,
    limit: int | None = None,
    mg_answers_only: bool = False,
) -> list[QAExample]:
    """Read the newline-delimited example format.

    Fields: query (required), answers (list or string), task, id, filter_key,
    split. mg_answers_only keeps only examples whose every answer looks like
    'X mg' with X a number (the extractive dosage task's loader filter).
    """
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        answers = rec.get("answers", rec.get("answer"))
        if isinstance(answers, str):
            answers = [answers]
        task = Task(rec.get("task", "simulated_fact"))
        if task == Task.BOOLEAN:
            answers = ["1" if str(a).strip().lower() in ("1", "true", "yes") else "0" for a in answers]
        example = QAExample(
            query_id=str(rec.get("id", f"q{lineno:05d}")),
            query=rec["query"],
            gold_answers=[str(a) for a in answers],
            task=task,
            filter_key=rec.get("filter_key"),
            split=rec.get("split", "test"),
        )
        if mg_answers_only and not all(
            parse_quantity_mg(a) == a for a in example.gold_answers
        ):
            continue
        if split is not None and example.split != split:
            continue
        examples.append(example)
        if limit is not None and len(examples) >= limit:
            break
    return examples
