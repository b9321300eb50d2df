"""Retriever fan-out and the refiner stage that reranks/filters candidates into
the evidence set handed to the reasoner and the progress tracker."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Protocol, Sequence

from .corpus import CorpusStore, Passage
from .embed import EmbeddingProvider, tokenize
from .index import VectorIndex
from .llm import ChatEndpoint, EndpointError

_RANK_ITEM_RE = re.compile(r"\[(\d+)\]")

DEFAULT_FANOUT = 20
DEFAULT_TOP_K = 5
MAX_PASSAGE_TOKENS = 512  # whitespace tokens sent per passage to a listwise endpoint


class MalformedRankingError(ValueError):
    """The listwise endpoint reply contained no usable ranking."""


@dataclass(frozen=True)
class RefinedSet:
    """Ordered evidence for one turn; ``passages[0]`` is the refiner's top pick."""

    query: str
    passages: tuple[Passage, ...]
    origin_scores: tuple[float, ...]
    fallback_reason: str | None = None


class RefinerStrategy(Protocol):
    top_k: int

    def refine(self, query: str, candidates: Sequence[tuple[Passage, float]]) -> RefinedSet: ...


def retrieve(
    index: VectorIndex,
    store: CorpusStore,
    provider: EmbeddingProvider,
    query: str,
    n: int = DEFAULT_FANOUT,
) -> list[tuple[Passage, float]]:
    """Embed the query and resolve the top-n hits back to passages."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    if n < 1:
        raise ValueError("n must be >= 1")
    hits = index.search(provider.embed_text(query), n)
    return [(store.get(h.passage_id), h.score) for h in hits]


@dataclass
class DenseRetriever:
    """Binds index, store, and provider behind a single retrieve(query, n) call."""

    index: VectorIndex
    store: CorpusStore
    provider: EmbeddingProvider

    def retrieve(self, query: str, n: int = DEFAULT_FANOUT) -> list[tuple[Passage, float]]:
        return retrieve(self.index, self.store, self.provider, query, n)


def _dedupe(candidates: Sequence[tuple[Passage, float]]) -> list[tuple[Passage, float]]:
    seen: set[str] = set()
    out = []
    for p, s in candidates:
        if p.id in seen:
            continue
        seen.add(p.id)
        out.append((p, float(s)))
    return out


@dataclass
class IdentityRefiner:
    """Keeps the retriever's order, truncated to top_k (the no-refiner passthrough)."""

    top_k: int = DEFAULT_TOP_K

    def refine(self, query: str, candidates: Sequence[tuple[Passage, float]]) -> RefinedSet:
        if not candidates:
            raise ValueError("refine requires at least one candidate")
        kept = _dedupe(candidates)[: self.top_k]
        return RefinedSet(query, tuple(p for p, _ in kept), tuple(s for _, s in kept))


@dataclass
class LexicalOverlapRefiner:
    """Reranks by normalized query-token coverage.

    Score = |tokens(query) ∩ tokens(passage.text)| / |tokens(query)| with set
    semantics; ties keep the incoming order, so a query with zero overlap
    everywhere is a no-op reorder.
    """

    top_k: int = DEFAULT_TOP_K

    def refine(self, query: str, candidates: Sequence[tuple[Passage, float]]) -> RefinedSet:
        if not candidates:
            raise ValueError("refine requires at least one candidate")
        unique = _dedupe(candidates)
        qtokens = set(tokenize(query))
        if qtokens:
            scores = [len(qtokens & set(tokenize(p.text))) / len(qtokens) for p, _ in unique]
        else:
            scores = [0.0] * len(unique)
        order = sorted(range(len(unique)), key=lambda i: -scores[i])  # stable: ties by input order
        kept = order[: self.top_k]
        return RefinedSet(
            query,
            tuple(unique[i][0] for i in kept),
            tuple(scores[i] for i in kept),
        )


@dataclass
class ListwiseLlmRefiner:
    """Sends the numbered candidate list to a listwise-reranking LLM endpoint and
    applies the returned permutation.

    The model is asked for a ranking like "[2] > [1] > [3]". Parsing is
    tolerant: bracketed indices are read in order, unknown indices dropped,
    missing indices appended in input order. Replies with no usable indices, or
    transport failures after retries, fall back to the input order and flag the
    refined set.
    """

    endpoint: ChatEndpoint
    top_k: int = DEFAULT_TOP_K
    max_passage_tokens: int = MAX_PASSAGE_TOKENS

    def refine(self, query: str, candidates: Sequence[tuple[Passage, float]]) -> RefinedSet:
        if not candidates:
            raise ValueError("refine requires at least one candidate")
        unique = _dedupe(candidates)
        try:
            reply = self.endpoint.complete(self._messages(query, unique), temperature=0.0)
            order = parse_ranking(reply, len(unique))
        except EndpointError as exc:
            return self._fallback(query, unique, f"endpoint failure: {exc}")
        except MalformedRankingError as exc:
            return self._fallback(query, unique, f"malformed ranking: {exc}")
        kept = order[: self.top_k]
        return RefinedSet(
            query,
            tuple(unique[i][0] for i in kept),
            tuple(unique[i][1] for i in kept),
        )

    def _fallback(self, query, unique, reason: str) -> RefinedSet:
        kept = unique[: self.top_k]
        return RefinedSet(
            query,
            tuple(p for p, _ in kept),
            tuple(s for _, s in kept),
            fallback_reason=reason,
        )

    def _messages(self, query: str, unique: list[tuple[Passage, float]]) -> list[dict]:
        lines = []
        for i, (p, _) in enumerate(unique, 1):
            text = " ".join(p.text.split()[: self.max_passage_tokens])
            lines.append(f"[{i}] {p.title}: {text}")
        user = (
            f"Rank the following {len(unique)} passages by relevance to the query.\n"
            f"Query: {query}\n\n" + "\n".join(lines) + "\n\n"
            'Answer with the ranking only, most relevant first, e.g. "[2] > [1] > [3]".'
        )
        return [
            {"role": "system", "content": "You rank passages by relevance to a query."},
            {"role": "user", "content": user},
        ]


def parse_ranking(reply: str, n: int) -> list[int]:
    """Extract a permutation of range(n) from a ranking reply (1-based indices)."""
    order: list[int] = []
    seen: set[int] = set()
    for match in _RANK_ITEM_RE.finditer(reply):
        idx = int(match.group(1)) - 1
        if 0 <= idx < n and idx not in seen:
            seen.add(idx)
            order.append(idx)
    if not order:
        raise MalformedRankingError(f"no candidate indices in reply {reply[:80]!r}")
    order.extend(i for i in range(n) if i not in seen)
    return order
