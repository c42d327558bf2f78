from __future__ import annotations

import json

import pytest

from thoughtsearch.retrieval import ingest_corpus


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


@pytest.fixture()
def small_index(tmp_path):
    """Six one-chunk documents sharing a filler vocabulary."""
    records = [
        {
            "source_id": f"s{i}",
            "filter_key": None,
            "text": f"entry doc{i} shared filler words fact:k{i}=v{i}",
        }
        for i in range(6)
    ]
    return ingest_corpus(write_jsonl(tmp_path / "corpus.jsonl", records), chunk_size=50, dim=64)


class ConstantScorer:
    def __init__(self, value: float):
        self.value = value

    def score(self, graph, node_id, generator) -> float:
        return self.value


@pytest.fixture()
def constant_scorer():
    return ConstantScorer
