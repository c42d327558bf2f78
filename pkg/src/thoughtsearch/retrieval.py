"""Corpus ingestion, hashed TF-IDF embeddings, cosine top-k retrieval, and the
refill-on-empty per-search document queue.

Corpora are desk-scale, so exhaustive cosine scoring is both the oracle and
the implementation; there is deliberately no approximate nearest-neighbor
structure here.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np
import requests

from .errors import CorpusError, ExhaustedCorpusError, SchemaError, TransportError

INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Document:
    """One retrievable chunk of source text."""

    doc_id: int
    text: str
    source_id: str
    filter_key: str | None
    word_count: int


class Embedder(Protocol):
    dim: int

    @property
    def embedder_id(self) -> str: ...

    def embed(self, text: str) -> np.ndarray: ...


def _tokens(text: str) -> list[str]:
    return text.lower().split()


def token_bucket(token: str, dim: int) -> int:
    """Stable hash bucket for a token; identical across processes and runs."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


@dataclass
class HashedEmbedder:
    """Hashed term-frequency embedder, optionally IDF-weighted, L2-normalized.

    Without an IDF table (the unfitted form) every token weighs 1.0, which
    makes the embedder usable on arbitrary text with no corpus attached.
    """

    dim: int = 256
    idf: dict[str, float] | None = None
    n_docs: int = 0

    @property
    def embedder_id(self) -> str:
        if self.idf is None:
            return f"hashed-tf-v1-d{self.dim}"
        return f"hashed-tfidf-v1-d{self.dim}-{self._idf_fingerprint()}"

    def _idf_fingerprint(self) -> str:
        blob = json.dumps(sorted(self.idf.items()), separators=(",", ":"))
        return hashlib.blake2b(blob.encode("utf-8"), digest_size=6).hexdigest()

    def _weight(self, token: str) -> float:
        if self.idf is None:
            return 1.0
        # Smooth IDF; unseen tokens get the df=0 weight.
        return self.idf.get(token, math.log(1.0 + self.n_docs) + 1.0)

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        for token, count in Counter(_tokens(text)).items():
            vec[token_bucket(token, self.dim)] += count * self._weight(token)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm else vec


def fit_idf_embedder(texts: Iterable[str], dim: int) -> HashedEmbedder:
    """Build a hashed embedder with smooth IDF weights from a chunk corpus."""
    doc_freq: Counter[str] = Counter()
    n_docs = 0
    for text in texts:
        n_docs += 1
        doc_freq.update(set(_tokens(text)))
    idf = {
        token: math.log((1.0 + n_docs) / (1.0 + df)) + 1.0
        for token, df in sorted(doc_freq.items())
    }
    return HashedEmbedder(dim=dim, idf=idf, n_docs=n_docs)


class RemoteEmbedder:
    """Delegates embedding to an HTTP endpoint: POST {text} -> {embedding}."""

    def __init__(self, endpoint: str, dim: int, timeout_s: float = 30.0, name: str = "default"):
        self.endpoint = endpoint
        self.dim = dim
        self.timeout_s = timeout_s
        self.name = name
        self._session = requests.Session()

    @property
    def embedder_id(self) -> str:
        return f"remote-v1-d{self.dim}-{self.name}"

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = self._session.post(
                self.endpoint, json={"text": text}, timeout=self.timeout_s
            )
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise TransportError(f"embedding endpoint failed: {exc}") from exc
        vec = np.asarray(payload.get("embedding", []), dtype=np.float64)
        if vec.shape != (self.dim,):
            raise TransportError(
                f"embedding endpoint returned shape {vec.shape}, expected ({self.dim},)"
            )
        return vec


@dataclass
class CorpusIndex:
    """Immutable after ingestion; safe to share across concurrent searches."""

    documents: list[Document]
    embeddings: np.ndarray  # row i embeds documents[i]; rows L2-normalized
    embedder: HashedEmbedder

    @property
    def embedder_id(self) -> str:
        return self.embedder.embedder_id


def chunk_words(text: str, size: int) -> list[str]:
    """Split on whitespace into consecutive chunks of exactly `size` words.

    The final chunk may be shorter. Chunk text is whitespace-normalized, so
    concatenating the chunks' tokens reproduces the source token stream.
    """
    if size < 1:
        raise CorpusError(f"chunk size must be >= 1, got {size}")
    words = text.split()
    return [" ".join(words[i : i + size]) for i in range(0, len(words), size)]


def _read_records(source: str | Path) -> list[tuple[str, str | None, str]]:
    """Yield (source_id, filter_key, text) from a directory of .txt files or
    a newline-delimited JSON record file with fields source_id/filter_key/text."""
    path = Path(source)
    if path.is_dir():
        files = sorted(p for p in path.rglob("*.txt") if p.is_file())
        if not files:
            raise CorpusError(f"no .txt files under {path}")
        return [
            (str(p.relative_to(path)), None, p.read_text(encoding="utf-8"))
            for p in files
        ]
    if path.is_file():
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: bad record: {exc}") from exc
            if "text" not in rec:
                raise CorpusError(f"{path}:{lineno}: record missing 'text'")
            records.append(
                (str(rec.get("source_id", f"record-{lineno}")), rec.get("filter_key"), rec["text"])
            )
        if not records:
            raise CorpusError(f"no records in {path}")
        return records
    raise CorpusError(f"corpus source not found: {path}")


def ingest_corpus(
    source: str | Path,
    chunk_size: int,
    filter_key_fn: Callable[[str], str | None] | None = None,
    dim: int = 256,
) -> CorpusIndex:
    """Chunk every source text, fit IDF weights, and embed each chunk."""
    documents: list[Document] = []
    for source_id, filter_key, text in _read_records(source):
        if filter_key_fn is not None:
            filter_key = filter_key_fn(source_id)
        for chunk in chunk_words(text, chunk_size):
            if not chunk:
                continue
            documents.append(
                Document(
                    doc_id=len(documents),
                    text=chunk,
                    source_id=source_id,
                    filter_key=filter_key,
                    word_count=len(chunk.split()),
                )
            )
    if not documents:
        raise CorpusError(f"corpus at {source} produced no chunks")
    embedder = fit_idf_embedder((d.text for d in documents), dim=dim)
    embeddings = np.stack([embedder.embed(d.text) for d in documents])
    return CorpusIndex(documents=documents, embeddings=embeddings, embedder=embedder)


def retrieve(
    index: CorpusIndex,
    query_text: str,
    k: int,
    filter_key: str | None = None,
    exclude: set[int] | frozenset[int] = frozenset(),
) -> list[Document]:
    """Top-k documents by cosine similarity, ties broken by lowest doc_id."""
    if k < 1:
        raise CorpusError(f"k must be >= 1, got {k}")
    candidates = [
        i
        for i, doc in enumerate(index.documents)
        if doc.doc_id not in exclude
        and (filter_key is None or doc.filter_key == filter_key)
    ]
    if not candidates:
        return []
    query_vec = index.embedder.embed(query_text)
    sims = index.embeddings[candidates] @ query_vec
    ranked = sorted(zip(candidates, sims), key=lambda pair: (-pair[1], pair[0]))
    return [index.documents[i] for i, _ in ranked[:k]]


@dataclass
class DocumentQueue:
    """Per-search FIFO of retrieved chunks. Never hands out a chunk twice."""

    batch_size: int
    filter_key: str | None = None
    pending: list[Document] = field(default_factory=list)
    served: set[int] = field(default_factory=set)
    refills: int = 0


def refill_if_empty(
    queue: DocumentQueue, index: CorpusIndex, query_provider: Callable[[], str]
) -> None:
    if queue.pending:
        return
    queue.refills += 1
    queue.pending = retrieve(
        index,
        query_provider(),
        k=queue.batch_size,
        filter_key=queue.filter_key,
        exclude=queue.served,
    )


def queue_next(
    queue: DocumentQueue, index: CorpusIndex, query_provider: Callable[[], str]
) -> Document:
    """Pop the head document, refilling via a fresh retrieval when empty."""
    refill_if_empty(queue, index, query_provider)
    if not queue.pending:
        raise ExhaustedCorpusError("no retrievable documents remain")
    doc = queue.pending.pop(0)
    queue.served.add(doc.doc_id)
    return doc


def consume_pending(queue: DocumentQueue, doc: Document) -> None:
    """Mark a specific pending document as served (used by the greedy planner)."""
    queue.pending = [d for d in queue.pending if d.doc_id != doc.doc_id]
    queue.served.add(doc.doc_id)


def _b64_floats(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _floats_b64(blob: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(base64.b64decode(blob), dtype="<f8").reshape(shape).copy()


def save_index(index: CorpusIndex, path: str | Path) -> None:
    """Write a deterministic, byte-stable index file."""
    record = {
        "version": INDEX_FORMAT_VERSION,
        "embedder_id": index.embedder_id,
        "embedder": {
            "dim": index.embedder.dim,
            "n_docs": index.embedder.n_docs,
            "idf": index.embedder.idf,
        },
        "documents": [
            {
                "doc_id": d.doc_id,
                "text": d.text,
                "source_id": d.source_id,
                "filter_key": d.filter_key,
                "word_count": d.word_count,
            }
            for d in index.documents
        ],
        "embeddings": _b64_floats(index.embeddings),
        "shape": list(index.embeddings.shape),
    }
    Path(path).write_text(
        json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_index(path: str | Path, expected_embedder_id: str | None = None) -> CorpusIndex:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read index file {path}: {exc}") from exc
    if record.get("version") != INDEX_FORMAT_VERSION:
        raise SchemaError(f"unsupported index version {record.get('version')!r}")
    emb_rec = record["embedder"]
    embedder = HashedEmbedder(
        dim=emb_rec["dim"], idf=emb_rec["idf"], n_docs=emb_rec["n_docs"]
    )
    if expected_embedder_id is not None and embedder.embedder_id != expected_embedder_id:
        raise SchemaError(
            f"index embedder_id {embedder.embedder_id!r} does not match "
            f"configured {expected_embedder_id!r}"
        )
    documents = [
        Document(
            doc_id=d["doc_id"],
            text=d["text"],
            source_id=d["source_id"],
            filter_key=d["filter_key"],
            word_count=d["word_count"],
        )
        for d in record["documents"]
    ]
    embeddings = _floats_b64(record["embeddings"], tuple(record["shape"]))
    return CorpusIndex(documents=documents, embeddings=embeddings, embedder=embedder)
