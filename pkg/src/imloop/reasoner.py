"""Reasoner roles: questioner backends (scripted, question-echo, template policy,
LLM endpoint), answerer backends, transcript serialization, and SFT export."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import EpisodeSample, Passage
from .llm import ChatEndpoint
from .refine import RefinedSet

log = logging.getLogger(__name__)

MAX_QUERY_TOKENS = 64
_QUERY_LABEL_RE = re.compile(r"^query\s*[:\-]\s*", re.IGNORECASE)

SFT_INSTRUCTION = (
    "Answer the question using the evidence gathered in the search transcript."
)


class QueryExtractionError(RuntimeError):
    """The backend produced no usable next query; the episode falls through to answering."""


class QueryExhaustedError(RuntimeError):
    """A scripted questioner ran out of queries."""


class ReadyToAnswer(Exception):
    """Raised by a backend to declare it has enough evidence (inference stop signal)."""


@dataclass(frozen=True)
class Turn:
    query: str
    refined: RefinedSet
    distance: float | None = None


@dataclass(frozen=True)
class Transcript:
    question: str
    turns: tuple[Turn, ...] = ()
    final_answer: str | None = None

    def retrieved_ids(self) -> frozenset[str]:
        """Ids of every passage kept by the refiner across all turns."""
        return frozenset(p.id for t in self.turns for p in t.refined.passages)


@dataclass(frozen=True)
class ActionInfo:
    """Which template-policy action produced a turn's query, with its log-prob."""

    bucket: int
    action: int
    log_prob: float


def serialize_turns(transcript: Transcript) -> str:
    """Prompt-facing transcript body: alternating query and evidence lines."""
    lines = []
    for i, turn in enumerate(transcript.turns, 1):
        lines.append(f"Q{i}: {turn.query}")
        for p in turn.refined.passages:
            lines.append(f"Evidence{i}: {p.title}: {p.text}")
    return "\n".join(lines)


def transcript_to_json(t: Transcript) -> dict:
    return {
        "question": t.question,
        "final_answer": t.final_answer,
        "turns": [
            {
                "query": turn.query,
                "distance": turn.distance,
                "refined": {
                    "query": turn.refined.query,
                    "fallback_reason": turn.refined.fallback_reason,
                    "passages": [
                        {"id": p.id, "title": p.title, "text": p.text}
                        for p in turn.refined.passages
                    ],
                    "origin_scores": list(turn.refined.origin_scores),
                },
            }
            for turn in t.turns
        ],
    }


def transcript_from_json(data: dict) -> Transcript:
    turns = []
    for rec in data["turns"]:
        ref = rec["refined"]
        refined = RefinedSet(
            query=ref["query"],
            passages=tuple(Passage(**p) for p in ref["passages"]),
            origin_scores=tuple(float(s) for s in ref["origin_scores"]),
            fallback_reason=ref["fallback_reason"],
        )
        turns.append(Turn(query=rec["query"], refined=refined, distance=rec["distance"]))
    return Transcript(
        question=data["question"],
        turns=tuple(turns),
        final_answer=data["final_answer"],
    )


# --------------------------------------------------------------------------
# questioner backends


@dataclass(frozen=True)
class ScriptedQuestioner:
    """Replays a fixed query list; query i serves turn i. Stateless, so concurrent
    episodes can share one instance."""

    queries: tuple[str, ...]

    def __post_init__(self):
        if not self.queries:
            raise ValueError("scripted questioner needs at least one query")

    def propose_query(self, transcript: Transcript, rng_seed: int = 0):
        i = len(transcript.turns)
        if i >= len(self.queries):
            raise QueryExhaustedError(f"scripted queries exhausted at turn {i}")
        return self.queries[i], None


@dataclass(frozen=True)
class QuestionEchoQuestioner:
    """Always proposes the original question (the single-shot, no-loop baseline)."""

    def propose_query(self, transcript: Transcript, rng_seed: int = 0):
        return transcript.question, None


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


@dataclass
class PolicyParams:
    """Tabular query policy: one softmax over template actions per turn bucket."""

    logits: np.ndarray  # [buckets, actions], float64
    templates: tuple[str, ...]

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 2:
            raise ValueError("logits must be a [buckets, actions] matrix")
        if not np.isfinite(self.logits).all():
            raise ValueError("logits must be finite")
        if self.logits.shape[1] < 2:
            raise ValueError("policy needs at least 2 actions")
        if len(self.templates) != self.logits.shape[1]:
            raise ValueError("one template per action required")

    @property
    def num_buckets(self) -> int:
        return self.logits.shape[0]

    @property
    def num_actions(self) -> int:
        return self.logits.shape[1]

    def log_probs(self, bucket: int) -> np.ndarray:
        return log_softmax(self.logits[bucket])

    def probs(self, bucket: int) -> np.ndarray:
        return softmax(self.logits[bucket])

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.logits.copy(), self.templates)

    def to_json(self) -> dict:
        return {"logits": self.logits.tolist(), "templates": list(self.templates)}

    @classmethod
    def from_json(cls, data: dict) -> "PolicyParams":
        return cls(np.asarray(data["logits"], dtype=np.float64), tuple(data["templates"]))

    @classmethod
    def uniform(cls, num_buckets: int, templates: Sequence[str]) -> "PolicyParams":
        return cls(np.zeros((num_buckets, len(templates))), tuple(templates))


def render_template(template: str, question: str, last_title: str) -> str:
    """Fill the {question} / {last_title} slots. An all-empty render falls back
    to the question so the proposed query is never empty."""
    query = template.replace("{question}", question).replace("{last_title}", last_title)
    return query.strip() or question


@dataclass
class TemplatePolicyQuestioner:
    """Trainable toy questioner: buckets by turn index, samples a template action
    from the bucket's softmax, and fills slots from the question and the latest
    evidence title. ``greedy`` switches sampling to argmax for evaluation."""

    params: PolicyParams
    greedy: bool = False

    def propose_query(self, transcript: Transcript, rng_seed: int = 0):
        bucket = min(len(transcript.turns), self.params.num_buckets - 1)
        log_probs = self.params.log_probs(bucket)
        if self.greedy:
            action = int(np.argmax(log_probs))
        else:
            rng = np.random.default_rng(rng_seed)
            cdf = np.cumsum(np.exp(log_probs))
            action = min(int(np.searchsorted(cdf, rng.random(), side="right")),
                         self.params.num_actions - 1)
        last_title = ""
        if transcript.turns and transcript.turns[-1].refined.passages:
            last_title = transcript.turns[-1].refined.passages[0].title
        query = render_template(self.params.templates[action], transcript.question, last_title)
        return query, ActionInfo(bucket, action, float(log_probs[action]))


@dataclass
class LlmQuestioner:
    """Asks a chat endpoint for the next search query.

    The first non-empty reply line is the query (a leading "Query:" label is
    stripped); replies longer than ``max_query_tokens`` or with no usable line
    raise QueryExtractionError. A bare READY/ANSWER line signals the backend
    wants to answer instead.
    """

    endpoint: ChatEndpoint
    temperature: float = 0.0
    max_query_tokens: int = MAX_QUERY_TOKENS

    def propose_query(self, transcript: Transcript, rng_seed: int = 0):
        messages = [
            {
                "role": "system",
                "content": (
                    "You decompose a question into search queries. Given the question and "
                    "the evidence gathered so far, reply with the single next search query "
                    "on one line, or the word READY if the evidence already suffices."
                ),
            },
            {
                "role": "user",
                "content": f"Question: {transcript.question}\n{serialize_turns(transcript)}".rstrip(),
            },
        ]
        reply = self.endpoint.complete(messages, temperature=self.temperature)
        return extract_query(reply, self.max_query_tokens), None


def extract_query(reply: str, max_tokens: int = MAX_QUERY_TOKENS) -> str:
    first = next((line.strip() for line in reply.splitlines() if line.strip()), "")
    if not first:
        raise QueryExtractionError("empty completion")
    if first.upper().rstrip(".") in ("READY", "ANSWER"):
        raise ReadyToAnswer()
    first = _QUERY_LABEL_RE.sub("", first).strip()
    if not first:
        raise QueryExtractionError("completion had only a query label")
    if len(first.split()) > max_tokens:
        raise QueryExtractionError(f"query longer than {max_tokens} tokens")
    return first


# --------------------------------------------------------------------------
# answerer backends


@dataclass(frozen=True)
class ScriptedAnswerer:
    answer_text: str

    def answer(self, transcript: Transcript) -> str:
        return self.answer_text


@dataclass(frozen=True)
class ShortestTitleAnswerer:
    """Toy answerer: returns the shortest title among each turn's top evidence
    passage (ties lexicographic), or "" with no evidence. Pairs with corpora
    whose answers are passage titles."""

    def answer(self, transcript: Transcript) -> str:
        titles = [
            t.refined.passages[0].title for t in transcript.turns if t.refined.passages
        ]
        if not titles:
            return ""
        return min(titles, key=lambda title: (len(title), title))


@dataclass
class LlmAnswerer:
    endpoint: ChatEndpoint
    temperature: float = 0.0
    max_tokens: int = 64

    def answer(self, transcript: Transcript) -> str:
        messages = [
            {
                "role": "system",
                "content": "Answer the question concisely using only the evidence provided.",
            },
            {
                "role": "user",
                "content": f"Question: {transcript.question}\n{serialize_turns(transcript)}\nAnswer:",
            },
        ]
        return self.endpoint.complete(
            messages, temperature=self.temperature, max_tokens=self.max_tokens
        ).strip()


# --------------------------------------------------------------------------
# SFT export


def export_sft_records(
    episodes: Iterable[Transcript],
    samples: Iterable[EpisodeSample],
    path: str | Path,
) -> int:
    """Write instruction-tuning JSONL: the question plus its transcript as input,
    the gold answer as output. Transcripts with no matching sample are skipped
    with a warning. Returns the number of records written."""
    by_question: dict[str, EpisodeSample] = {}
    for s in samples:
        by_question.setdefault(s.question, s)
    written = 0
    skipped = 0
    with open(path, "w", encoding="utf-8") as fh:
        for t in episodes:
            sample = by_question.get(t.question)
            if sample is None or not sample.gold_answer:
                skipped += 1
                continue
            record = {
                "instruction": SFT_INSTRUCTION,
                "input": f"Question: {t.question}\n{serialize_turns(t)}".rstrip(),
                "output": sample.gold_answer,
            }
            fh.write(json.dumps(record) + "\n")
            written += 1
    if skipped:
        log.warning("export_sft_records: skipped %d transcripts with no matching sample", skipped)
    return written
