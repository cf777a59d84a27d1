"""Model gateway: one place the rest of the engine talks to LLM providers.

Chat, embedding and rerank providers hang off a registry keyed by model id.
Scripted providers make engagements replayable offline; the hash embedder and
term-overlap reranker give deterministic vectors/scores with embedding-like
geometry for tests and simulated runs. Retries, token accounting and the
engagement token budget all live here so callers never handle them twice.
"""

from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    ProviderUnavailable,
    TransientProviderError,
    UnknownModel,
    UnmatchedScriptEntry,
)

DEFAULT_TEMPERATURE = 0.2
DEFAULT_MAX_OUTPUT_TOKENS = 2048

RETRY_BASE_SECONDS = 1.0
RETRY_FACTOR = 2.0
MAX_ATTEMPTS = 3

EMBEDDING_DIM = 64

_WORD_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


@dataclass
class ChatMessage:
    role: str  # "system" | "user" | "assistant"
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message must have content")


@dataclass
class ChatRequest:
    model: str
    messages: list[ChatMessage]
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request needs at least one message")

    def last_user_content(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return self.messages[-1].content


@dataclass
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass
class ChatResponse:
    text: str
    usage: TokenUsage
    model: str = ""


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class RerankProvider(Protocol):
    def rerank(
        self, query: str, candidates: Sequence[str]
    ) -> list[tuple[int, float]]: ...


def _rough_token_count(text: str) -> int:
    # 4 chars per token: stable, cheap, good enough for budget accounting
    return len(text) // 4 + 1


@dataclass
class ScriptEntry:
    response: str
    match: str | None = None  # substring of the last user message
    pattern: str | None = None  # regex alternative

    def matches(self, text: str) -> bool:
        if self.pattern is not None:
            return re.search(self.pattern, text) is not None
        return (self.match or "") in text


class ScriptedProvider:
    """Deterministic chat provider driven by an ordered entry list.

    Entries match against the last user message, by substring or regex.
    Entries sharing a matcher form a queue: each hit consumes the next one,
    and once a queue is exhausted its final entry keeps answering. A request
    nothing matches raises, so fixture gaps fail loudly instead of drifting.
    """

    def __init__(self, entries: Sequence[ScriptEntry], name: str = "scripted"):
        self.name = name
        # group into per-matcher queues, priority by first occurrence
        self._queues: list[tuple[ScriptEntry, list[str]]] = []
        by_key: dict[tuple[str | None, str | None], list[str]] = {}
        for entry in entries:
            key = (entry.match, entry.pattern)
            if key not in by_key:
                by_key[key] = []
                self._queues.append((entry, by_key[key]))
            by_key[key].append(entry.response)
        self._cursors: list[int] = [0] * len(self._queues)
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, raw_entries: Sequence[dict], name: str = "scripted") -> ScriptedProvider:
        entries = []
        for raw in raw_entries:
            entries.append(
                ScriptEntry(
                    response=raw["response"],
                    match=raw.get("match"),
                    pattern=raw.get("pattern"),
                )
            )
        return cls(entries, name=name)

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt_text = "\n".join(m.content for m in request.messages)
        last_user = request.last_user_content()
        with self._lock:
            response = None
            for queue_index, (sample, responses) in enumerate(self._queues):
                if not sample.matches(last_user):
                    continue
                cursor = self._cursors[queue_index]
                # exhausted queues stick on their final response
                response = responses[min(cursor, len(responses) - 1)]
                self._cursors[queue_index] = cursor + 1
                break
            if response is None:
                snippet = last_user[:160].replace("\n", " ")
                raise UnmatchedScriptEntry(
                    f"{self.name}: no entry matches request starting {snippet!r}"
                )
        return ChatResponse(
            text=response,
            usage=TokenUsage(
                prompt_tokens=_rough_token_count(prompt_text),
                completion_tokens=_rough_token_count(response),
            ),
            model=request.model,
        )


class HashEmbeddingProvider:
    """Seeded hash of the token multiset projected to a fixed dimension.

    Same text, same vector, unit norm; shares no state with any network.
    """

    def __init__(self, dim: int = EMBEDDING_DIM, seed: str = "pentagent"):
        self.dim = dim
        self.seed = seed

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, person=self.seed.encode()[:16]
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return rng.standard_normal(self.dim)

    def embed_one(self, text: str) -> np.ndarray:
        tokens = tokenize(text) or [""]
        vec = np.zeros(self.dim)
        for token in tokens:
            vec += self._token_vector(token)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:  # astronomically unlikely token cancellation
            vec = self._token_vector("")
            norm = float(np.linalg.norm(vec))
        return vec / norm

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed_one(t) for t in texts])


class TermOverlapReranker:
    """Score = |shared query terms| / |query terms|, ties keep input order."""

    def rerank(
        self, query: str, candidates: Sequence[str]
    ) -> list[tuple[int, float]]:
        query_terms = set(tokenize(query))
        scored: list[tuple[int, float]] = []
        for index, candidate in enumerate(candidates):
            if not query_terms:
                score = 0.0
            else:
                shared = query_terms & set(tokenize(candidate))
                score = len(shared) / len(query_terms)
            scored.append((index, score))
        scored.sort(key=lambda pair: -pair[1])  # stable: input order on ties
        return scored


@dataclass
class ModelAssignment:
    """Which model id each module talks to."""

    planning: str
    execution: str
    summarization: str
    embedding: str
    rerank: str


@dataclass
class Gateway:
    chat_providers: dict[str, ChatProvider]
    assignment: ModelAssignment
    embedding_providers: dict[str, EmbeddingProvider] = field(default_factory=dict)
    rerank_providers: dict[str, RerankProvider] = field(default_factory=dict)
    token_budget: int | None = None
    sleeper: Callable[[float], None] = time.sleep

    def __post_init__(self):
        self._used_tokens = 0
        self._lock = threading.Lock()

    @property
    def used_tokens(self) -> int:
        with self._lock:
            return self._used_tokens

    def _charge(self, usage: TokenUsage) -> None:
        with self._lock:
            self._used_tokens += usage.total

    def _check_budget(self) -> None:
        if self.token_budget is None:
            return
        with self._lock:
            if self._used_tokens >= self.token_budget:
                raise BudgetExceeded(
                    f"token budget {self.token_budget} spent "
                    f"({self._used_tokens} used)"
                )

    def complete(self, request: ChatRequest) -> ChatResponse:
        provider = self.chat_providers.get(request.model)
        if provider is None:
            raise UnknownModel(f"no chat provider for model {request.model!r}")
        self._check_budget()
        delay = RETRY_BASE_SECONDS
        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            try:
                response = provider.complete(request)
                self._charge(response.usage)
                return response
            except TransientProviderError as exc:
                last_error = exc
                if attempt < MAX_ATTEMPTS:
                    self.sleeper(delay)
                    delay *= RETRY_FACTOR
        raise ProviderUnavailable(
            f"model {request.model!r} failed after {MAX_ATTEMPTS} attempts"
        ) from last_error

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        provider = self.embedding_providers.get(self.assignment.embedding)
        if provider is None:
            raise UnknownModel(
                f"no embedding provider for model {self.assignment.embedding!r}"
            )
        return provider.embed(texts)

    def rerank(
        self, query: str, candidates: Sequence[str]
    ) -> list[tuple[int, float]]:
        provider = self.rerank_providers.get(self.assignment.rerank)
        if provider is None:
            raise UnknownModel(
                f"no rerank provider for model {self.assignment.rerank!r}"
            )
        return provider.rerank(query, candidates)

    @property
    def has_reranker(self) -> bool:
        return self.assignment.rerank in self.rerank_providers
