"""Knowledge store with hybrid retrieval, and web-search clients.

Keyword scoring is BM25 (k1=1.2, b=0.75, a non-negative idf variant so a
term hit never scores below zero); vector scoring is cosine over the
gateway's unit embeddings. Hybrid search runs both at depth max(2k, 20),
fuses by reciprocal rank (constant 60) and hands the top 20 to the rerank
provider when one is configured.

Web search is fixture-first: queries are normalized (lowercase, collapsed
whitespace) and looked up in the bundle's fixture table. Live HTTP is a
separate opt-in seam that the test suite never enables.
"""

from __future__ import annotations

import math
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DuplicateDocId, EmptyIndex, NetworkDisabled
from .gateway import Gateway, tokenize

BM25_K1 = 1.2
BM25_B = 0.75
RRF_CONSTANT = 60
CHUNK_MIN_TOKENS = 300
CHUNK_MAX_TOKENS = 600
RERANK_DEPTH = 20
DEFAULT_TOP_K = 5

_CVE_QUERY_RE = re.compile(r"CVE-\d{4}-\d+", re.IGNORECASE)
_CODE_INTENT_TOKENS = frozenset({"github", "gitlab", "repo", "repository", "poc"})


@dataclass
class KnowledgeDoc:
    doc_id: str
    source: str  # corpus label, e.g. tool-reference
    title: str
    body: str
    ingested_at: float = 0.0


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    embedding: np.ndarray = field(repr=False)


@dataclass
class RetrievalHit:
    chunk_id: str
    keyword_rank: int | None  # 1-indexed position, None if absent from list
    vector_rank: int | None
    fused_score: float
    rerank_score: float | None = None


@dataclass(frozen=True)
class WebResult:
    provider: str  # vuln_db | code_search
    title: str
    url: str
    snippet: str


def split_paragraphs(body: str) -> list[str]:
    """Blocks of consecutive non-blank lines, inner text kept verbatim."""
    paragraphs: list[str] = []
    block: list[str] = []
    for line in body.splitlines():
        if line.strip():
            block.append(line)
        elif block:
            paragraphs.append("\n".join(block))
            block = []
    if block:
        paragraphs.append("\n".join(block))
    return paragraphs


def chunk_body(body: str) -> list[str]:
    """Greedy paragraph packing into the 300..600 token band.

    Each chunk after the first repeats the previous chunk's final paragraph
    (one-paragraph overlap). A chunk always takes at least one new paragraph
    so the walk terminates; the token band bends rather than splitting a
    paragraph mid-text.
    """
    paragraphs = split_paragraphs(body)
    if not paragraphs:
        return []
    sizes = [len(p.split()) for p in paragraphs]
    chunks: list[str] = []
    overlap: int | None = None  # index of the paragraph carried forward
    i = 0
    while i < len(paragraphs):
        members: list[int] = []
        count = 0
        if overlap is not None:
            members.append(overlap)
            count += sizes[overlap]
        members.append(i)  # forced new paragraph
        count += sizes[i]
        j = i + 1
        while count < CHUNK_MIN_TOKENS and j < len(paragraphs):
            members.append(j)
            count += sizes[j]
            j += 1
        while j < len(paragraphs) and count + sizes[j] <= CHUNK_MAX_TOKENS:
            members.append(j)
            count += sizes[j]
            j += 1
        chunks.append("\n\n".join(paragraphs[m] for m in members))
        if j >= len(paragraphs):
            break
        overlap = members[-1]
        i = j
    return chunks


def fuse_ranks(
    keyword_ids: Sequence[str], vector_ids: Sequence[str]
) -> list[RetrievalHit]:
    """Reciprocal rank fusion: score = sum over lists of 1/(60 + rank)."""
    keyword_rank = {cid: r for r, cid in enumerate(keyword_ids, start=1)}
    vector_rank = {cid: r for r, cid in enumerate(vector_ids, start=1)}
    hits = []
    for cid in dict.fromkeys([*keyword_ids, *vector_ids]):
        score = 0.0
        if cid in keyword_rank:
            score += 1.0 / (RRF_CONSTANT + keyword_rank[cid])
        if cid in vector_rank:
            score += 1.0 / (RRF_CONSTANT + vector_rank[cid])
        hits.append(
            RetrievalHit(
                chunk_id=cid,
                keyword_rank=keyword_rank.get(cid),
                vector_rank=vector_rank.get(cid),
                fused_score=score,
            )
        )
    hits.sort(key=lambda h: (-h.fused_score, h.chunk_id))
    return hits


class KnowledgeStore:
    """In-memory chunk index: BM25 + cosine + fusion + optional rerank."""

    def __init__(self, gateway: Gateway):
        self._gateway = gateway
        self._docs: dict[str, KnowledgeDoc] = {}
        self._chunks: list[Chunk] = []
        self._by_id: dict[str, Chunk] = {}
        self._term_counts: list[Counter] = []
        self._doc_freq: Counter = Counter()
        self._lock = threading.RLock()

    def __len__(self) -> int:
        with self._lock:
            return len(self._chunks)

    @property
    def doc_count(self) -> int:
        with self._lock:
            return len(self._docs)

    def get_chunk(self, chunk_id: str) -> Chunk:
        with self._lock:
            return self._by_id[chunk_id]

    def ingest(self, doc: KnowledgeDoc) -> list[str]:
        if not doc.body.strip():
            raise ValueError(f"doc {doc.doc_id!r} has an empty body")
        with self._lock:
            if doc.doc_id in self._docs:
                raise DuplicateDocId(f"doc id {doc.doc_id!r} already ingested")
            if not doc.ingested_at:
                doc.ingested_at = time.time()
            texts = chunk_body(doc.body)
            vectors = self._gateway.embed(texts)
            ids = []
            for ordinal, (text, vector) in enumerate(zip(texts, vectors)):
                chunk = Chunk(
                    chunk_id=f"{doc.doc_id}:{ordinal}",
                    doc_id=doc.doc_id,
                    ordinal=ordinal,
                    text=text,
                    embedding=vector,
                )
                self._chunks.append(chunk)
                self._by_id[chunk.chunk_id] = chunk
                counts = Counter(tokenize(text))
                self._term_counts.append(counts)
                for term in counts:
                    self._doc_freq[term] += 1
                ids.append(chunk.chunk_id)
            self._docs[doc.doc_id] = doc
            return ids

    def _require_index(self) -> None:
        if not self._chunks:
            raise EmptyIndex("no chunks ingested")

    def keyword_search(self, query: str, k: int) -> list[tuple[str, float]]:
        """Top-k (chunk_id, bm25 score), zero scores excluded."""
        with self._lock:
            self._require_index()
            terms = tokenize(query)
            n_chunks = len(self._chunks)
            avgdl = sum(sum(c.values()) for c in self._term_counts) / n_chunks
            scored: list[tuple[str, float]] = []
            for chunk, counts in zip(self._chunks, self._term_counts):
                dl = sum(counts.values())
                score = 0.0
                for term in terms:
                    tf = counts.get(term, 0)
                    if tf == 0:
                        continue
                    df = self._doc_freq[term]
                    idf = math.log(1.0 + (n_chunks - df + 0.5) / (df + 0.5))
                    denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl)
                    score += idf * tf * (BM25_K1 + 1.0) / denom
                if score > 0.0:
                    scored.append((chunk.chunk_id, score))
            scored.sort(key=lambda pair: (-pair[1], pair[0]))
            return scored[:k]

    def vector_search(self, query: str, k: int) -> list[tuple[str, float]]:
        """Top-k (chunk_id, cosine similarity)."""
        with self._lock:
            self._require_index()
            query_vec = self._gateway.embed([query])[0]
            scored = [
                (chunk.chunk_id, float(np.dot(chunk.embedding, query_vec)))
                for chunk in self._chunks
            ]
            scored.sort(key=lambda pair: (-pair[1], pair[0]))
            return scored[:k]

    def hybrid_search(self, query: str, k: int = DEFAULT_TOP_K) -> list[RetrievalHit]:
        with self._lock:
            self._require_index()
            depth = max(2 * k, 20)
            keyword_ids = [cid for cid, _ in self.keyword_search(query, depth)]
            vector_ids = [cid for cid, _ in self.vector_search(query, depth)]
            hits = fuse_ranks(keyword_ids, vector_ids)
            if self._gateway.has_reranker:
                head = hits[: min(RERANK_DEPTH, len(hits))]
                texts = [self._by_id[h.chunk_id].text for h in head]
                ranked = self._gateway.rerank(query, texts)
                reordered = []
                for index, score in ranked:
                    head[index].rerank_score = score
                    reordered.append(head[index])
                hits = reordered + hits[len(head):]
            return hits[:k]


def normalize_query(query: str) -> str:
    return " ".join(query.lower().split())


def route_query(query: str) -> tuple[str, ...]:
    """vuln_db for CVE-ish queries, code_search for repo-ish ones, else both."""
    tokens = set(tokenize(query))
    if _CVE_QUERY_RE.search(query) or "cve" in tokens:
        return ("vuln_db",)
    if "site:" in query.lower() or tokens & _CODE_INTENT_TOKENS:
        return ("code_search",)
    return ("vuln_db", "code_search")


class WebSearchClient:
    """Routes queries to vuln_db / code_search, answering from fixtures.

    fixtures: normalized query -> list of WebResult. A miss is not an error:
    it returns no results and reports through on_warning, mirroring how a
    live search can come back empty. Live mode needs allow_network plus an
    injected client per provider; nothing in this class opens a socket.
    """

    def __init__(
        self,
        fixtures: Mapping[str, Sequence[WebResult]] | None = None,
        *,
        allow_network: bool = False,
        live_clients: Mapping[str, Callable[[str], list[WebResult]]] | None = None,
        on_warning: Callable[[str], None] | None = None,
    ):
        self._fixtures = fixtures
        self._allow_network = allow_network
        self._live_clients = live_clients or {}
        self._on_warning = on_warning or (lambda _message: None)

    @staticmethod
    def fixtures_from_config(raw: Mapping[str, Sequence[Mapping]]) -> dict[str, list[WebResult]]:
        fixtures: dict[str, list[WebResult]] = {}
        for query, results in raw.items():
            fixtures[normalize_query(query)] = [
                WebResult(
                    provider=r["provider"],
                    title=r.get("title", ""),
                    url=r.get("url", ""),
                    snippet=r.get("snippet", ""),
                )
                for r in results
            ]
        return fixtures

    def search(self, query: str) -> list[WebResult]:
        providers = route_query(query)
        if self._fixtures is not None:
            key = normalize_query(query)
            results = [
                r for r in self._fixtures.get(key, []) if r.provider in providers
            ]
            if not results:
                self._on_warning(f"web fixture miss for query {key!r}")
            return results
        if not self._allow_network:
            raise NetworkDisabled(
                "live web search requires the explicit network opt-in"
            )
        results = []
        for provider in providers:
            client = self._live_clients.get(provider)
            if client is not None:
                results.extend(client(query))
        return results
