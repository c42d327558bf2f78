"""Generator ports.

Two implementations of the same protocol: a wire client for any
completion-style HTTP backend, and a deterministic simulated generator whose
texts carry machine-readable fact tokens so planner behaviour can be checked
by brute force. The simulated text convention:

    fact:KEY=VALUE   a planted fact (documents carry these)
    need:KEY         a query's information requirement
    has:KEY          emitted by the combiner for every fact key it holds
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import requests

from .errors import CapabilityError, GenerationError, TransportError
from .graph import NodeKind
from .templates import TemplateSet

ParentText = tuple[str, NodeKind]

FACT_TOKEN = re.compile(r"fact:([A-Za-z0-9_]+)=([A-Za-z0-9_]+)")
NEED_TOKEN = re.compile(r"need:([A-Za-z0-9_]+)")

UNKNOWN_ANSWER = "unknown"


@dataclass(frozen=True)
class GenerationResult:
    text: str
    token_scores: dict[str, float] | None = None


class Generator(Protocol):
    """Completion-backed operations every backend must provide."""

    def generate_thought(self, parents: Sequence[ParentText], query: str) -> str: ...

    def answer(self, query: str, context: str | None = None) -> str: ...

    def formulate_retrieval_query(self, thoughts: str, query: str) -> str: ...

    def score_tokens(self, prompt: str, tokens: Sequence[str]) -> dict[str, float]: ...

    def complete(self, prompt: str) -> str: ...


class CountingGenerator:
    """Delegating wrapper that counts every backend invocation."""

    def __init__(self, inner: Generator):
        self.inner = inner
        self.calls = 0

    def generate_thought(self, parents: Sequence[ParentText], query: str) -> str:
        self.calls += 1
        return self.inner.generate_thought(parents, query)

    def answer(self, query: str, context: str | None = None) -> str:
        self.calls += 1
        return self.inner.answer(query, context)

    def formulate_retrieval_query(self, thoughts: str, query: str) -> str:
        self.calls += 1
        return self.inner.formulate_retrieval_query(thoughts, query)

    def score_tokens(self, prompt: str, tokens: Sequence[str]) -> dict[str, float]:
        self.calls += 1
        return self.inner.score_tokens(prompt, tokens)

    def complete(self, prompt: str) -> str:
        self.calls += 1
        return self.inner.complete(prompt)


def parse_facts(text: str) -> dict[str, str]:
    """Fact tokens in order of first occurrence; first binding of a key wins."""
    facts: dict[str, str] = {}
    for key, value in FACT_TOKEN.findall(text):
        facts.setdefault(key, value)
    return facts


def parse_needs(text: str) -> list[str]:
    """Sorted unique requirement keys mentioned in the text."""
    return sorted(set(NEED_TOKEN.findall(text)))


class SimulatedGenerator:
    """Deterministic generator over fact tokens.

    Thought generation is fact-set union plus framing; answering looks up the
    query's requirement keys in the context facts. Identical inputs always
    produce identical outputs.
    """

    def generate_thought(self, parents: Sequence[ParentText], query: str) -> str:
        if len(parents) != 2:
            raise GenerationError(f"expected 2 parents, got {len(parents)}")
        facts: dict[str, str] = {}
        needs: set[str] = set(parse_needs(query))
        for text, _ in parents:
            for key, value in parse_facts(text).items():
                facts.setdefault(key, value)
            needs.update(parse_needs(text))
        pieces = ["note"]
        pieces += [f"need:{key}" for key in sorted(needs)]
        pieces += [f"has:{key}" for key in sorted(facts)]
        pieces += [f"fact:{key}={facts[key]}" for key in sorted(facts)]
        return " ".join(pieces)

    def answer(self, query: str, context: str | None = None) -> str:
        needs = parse_needs(query)
        if not needs:
            return UNKNOWN_ANSWER
        facts = parse_facts(context) if context else {}
        return " ".join(facts.get(key, UNKNOWN_ANSWER) for key in needs)

    def formulate_retrieval_query(self, thoughts: str, query: str) -> str:
        keywords = sorted({tok for tok in thoughts.split() if ":" in tok})
        return " ".join([query, *keywords]).strip()

    def score_tokens(self, prompt: str, tokens: Sequence[str]) -> dict[str, float]:
        if not tokens:
            raise GenerationError("score_tokens requires at least one token")
        needs = parse_needs(prompt)
        facts = parse_facts(prompt)
        covered = bool(needs) and all(key in facts for key in needs)
        p_yes, p_no = (0.9, 0.1) if covered else (0.1, 0.9)
        table = {"1": math.log(p_yes), "0": math.log(p_no)}
        return {tok: table.get(tok, math.log(1e-9)) for tok in tokens}

    def complete(self, prompt: str) -> str:
        scores = self.score_tokens(prompt, ["1", "0"])
        return "1" if scores["1"] > scores["0"] else "0"


def _join_parent_texts(parents: Sequence[ParentText]) -> tuple[str, str]:
    thoughts = [text for text, kind in parents if kind != NodeKind.DOCUMENT]
    documents = [text for text, kind in parents if kind == NodeKind.DOCUMENT]
    return "\n\n".join(thoughts), "\n\n".join(documents)


class HttpGenerator:
    """Client for a single completion-style HTTP route.

    Request body: {"prompt": str, "max_tokens": int, "logprob_tokens": [str]}
    Response body: {"text": str, "token_logprobs": {str: float}}

    Safe for concurrent use: in-flight requests are bounded by a semaphore and
    each request carries a timeout plus bounded retry.
    """

    def __init__(
        self,
        endpoint: str,
        templates: TemplateSet,
        timeout_s: float = 30.0,
        retries: int = 2,
        max_concurrency: int = 4,
        max_tokens: int = 256,
        temperature: float = 0.0,
        api_key: str | None = None,
    ):
        self.endpoint = endpoint
        self.templates = templates
        self.timeout_s = timeout_s
        self.retries = retries
        self.max_tokens = max_tokens
        self.temperature = temperature
        self.api_key = api_key
        self._semaphore = threading.BoundedSemaphore(max_concurrency)
        self._session = requests.Session()

    def _post(self, payload: dict) -> dict:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with self._semaphore:
                    resp = self._session.post(
                        self.endpoint, json=payload, timeout=self.timeout_s, headers=headers
                    )
                if resp.status_code >= 500:
                    last_error = TransportError(f"server error {resp.status_code}")
                    continue
                resp.raise_for_status()
                return resp.json()
            except requests.RequestException as exc:
                last_error = exc
        raise TransportError(f"completion endpoint failed: {last_error}") from (
            last_error if isinstance(last_error, Exception) else None
        )

    def _complete(
        self, prompt: str, logprob_tokens: Sequence[str] | None = None
    ) -> GenerationResult:
        payload: dict = {"prompt": prompt, "max_tokens": self.max_tokens}
        if self.temperature:
            payload["temperature"] = self.temperature
        if logprob_tokens:
            payload["logprob_tokens"] = list(logprob_tokens)
        body = self._post(payload)
        return GenerationResult(
            text=body.get("text", ""), token_scores=body.get("token_logprobs")
        )

    def _nonempty(self, text: str, what: str) -> str:
        if not text.strip():
            raise GenerationError(f"backend returned an empty {what}")
        return text.strip()

    def generate_thought(self, parents: Sequence[ParentText], query: str) -> str:
        if len(parents) != 2:
            raise GenerationError(f"expected 2 parents, got {len(parents)}")
        thoughts, documents = _join_parent_texts(parents)
        prompt = self.templates["ThoughtGen"].render(
            thoughts=thoughts, documents=documents, query=query
        )
        return self._nonempty(self._complete(prompt).text, "thought")

    def answer(self, query: str, context: str | None = None) -> str:
        if context is None:
            prompt = self.templates["AnswerClosedBook"].render(query=query)
        else:
            prompt = self.templates["AnswerWithContext"].render(
                query=query, context=context
            )
        return self._nonempty(self._complete(prompt).text, "answer")

    def formulate_retrieval_query(self, thoughts: str, query: str) -> str:
        prompt = self.templates["RetrievalQuery"].render(thoughts=thoughts, query=query)
        return self._nonempty(self._complete(prompt).text, "retrieval query")

    def score_tokens(self, prompt: str, tokens: Sequence[str]) -> dict[str, float]:
        if not tokens:
            raise GenerationError("score_tokens requires at least one token")
        result = self._complete(prompt, logprob_tokens=tokens)
        if result.token_scores is None:
            raise CapabilityError("backend does not report token log-probabilities")
        missing = [tok for tok in tokens if tok not in result.token_scores]
        if missing:
            raise CapabilityError(f"backend omitted log-probabilities for {missing}")
        return {tok: float(result.token_scores[tok]) for tok in tokens}

    def complete(self, prompt: str) -> str:
        return self._nonempty(self._complete(prompt).text, "completion")
