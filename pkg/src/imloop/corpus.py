"""Passage and QA-sample storage plus the answer normalization shared by all scoring."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")


class IngestError(ValueError):
    """A corpus or sample file could not be ingested; message carries the location."""


@dataclass(frozen=True)
class Passage:
    """One retrievable paragraph."""

    id: str
    title: str
    text: str


@dataclass(frozen=True)
class EpisodeSample:
    """A question, the ids of its gold supporting passages, and the gold answer.

    ``gold_support`` and ``gold_answer`` may be empty for inference-only samples;
    training requires both.
    """

    question: str
    gold_support: tuple[str, ...] = ()
    gold_answer: str = ""
    sample_id: str | None = None

    @property
    def sid(self) -> str:
        """Stable identifier used to align predictions with samples."""
        return self.sample_id if self.sample_id is not None else self.question


class CorpusStore:
    """Immutable passage store with id lookup and an attached sample list."""

    def __init__(self, passages: Iterable[Passage], samples: Iterable[EpisodeSample] = ()):
        table: dict[str, Passage] = {}
        for p in passages:
            if not p.text:
                raise IngestError(f"passage {p.id!r} has empty text")
            if p.id in table:
                raise IngestError(f"duplicate passage id {p.id!r}")
            table[p.id] = p
        self._passages = table
        self._samples = tuple(samples)
        for s in self._samples:
            missing = [pid for pid in s.gold_support if pid not in table]
            if missing:
                raise IngestError(f"sample {s.sid!r}: gold_support ids not in store: {missing}")

    def __len__(self) -> int:
        return len(self._passages)

    def __contains__(self, pid: str) -> bool:
        return pid in self._passages

    def get(self, pid: str) -> Passage:
        try:
            return self._passages[pid]
        except KeyError:
            raise KeyError(f"unknown passage id {pid!r}") from None

    @property
    def passages(self) -> tuple[Passage, ...]:
        return tuple(self._passages.values())

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self._passages.keys())

    @property
    def samples(self) -> tuple[EpisodeSample, ...]:
        return self._samples

    def with_samples(self, samples: Iterable[EpisodeSample]) -> "CorpusStore":
        return CorpusStore(self._passages.values(), samples)


def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation (Unicode category P), drop whole-word articles,
    and collapse whitespace. Total and idempotent."""
    s = s.lower()
    s = "".join(ch for ch in s if not unicodedata.category(ch).startswith("P"))
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def ingest_corpus(path: str | Path, format: str = "jsonl") -> CorpusStore:
    """Load a passage corpus (and, for hotpotqa-json, its QA samples).

    Formats:
      - ``jsonl``: one ``{"id","title","text"}`` object per line.
      - ``hotpotqa-json``: the distribution dev/train JSON; each context paragraph
        becomes a title-keyed passage, each entry a sample whose gold support ids
        are the supporting-fact titles.
    """
    path = Path(path)
    if format == "jsonl":
        return CorpusStore(_read_passages_jsonl(path))
    if format == "hotpotqa-json":
        return _ingest_hotpotqa(path)
    raise IngestError(f"unknown corpus format {format!r}")


def _read_passages_jsonl(path: Path) -> list[Passage]:
    passages = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
            passages.append(_passage_from_record(rec, f"{path}: line {lineno}"))
    return passages


def _passage_from_record(rec: object, where: str) -> Passage:
    if not isinstance(rec, Mapping):
        raise IngestError(f"{where}: expected an object, got {type(rec).__name__}")
    for key in ("id", "title", "text"):
        if key not in rec or not isinstance(rec[key], str):
            raise IngestError(f"{where}: missing or non-string field {key!r}")
    return Passage(id=rec["id"], title=rec["title"], text=rec["text"])


def _ingest_hotpotqa(path: Path) -> CorpusStore:
    with open(path, encoding="utf-8") as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(entries, list):
        raise IngestError(f"{path}: expected a top-level list of entries")

    # Paragraphs are keyed by article title; the same title across entries is the
    # same intro paragraph, so the first occurrence wins.
    passages: dict[str, Passage] = {}
    samples: list[EpisodeSample] = []
    for i, entry in enumerate(entries):
        where = f"{path}: entry {i}"
        if not isinstance(entry, Mapping):
            raise IngestError(f"{where}: expected an object")
        for title, sentences in entry.get("context", []):
            if title in passages:
                continue
            text = "".join(sentences).strip()
            if not text:
                raise IngestError(f"{where}: paragraph {title!r} has no text")
            passages[title] = Passage(id=title, title=title, text=text)
        support: list[str] = []
        for title, _sent_idx in entry.get("supporting_facts", []):
            if title not in passages:
                raise IngestError(f"{where}: supporting fact {title!r} not in any context")
            if title not in support:
                support.append(title)
        samples.append(
            EpisodeSample(
                question=entry.get("question", ""),
                gold_support=tuple(support),
                gold_answer=entry.get("answer", ""),
                sample_id=entry.get("_id"),
            )
        )
    return CorpusStore(passages.values(), samples)


def load_samples(path: str | Path, store: CorpusStore | None = None) -> tuple[EpisodeSample, ...]:
    """Load ``{"question","gold_support","answer"[,"id"]}`` JSONL sample records.

    When ``store`` is given, gold_support ids must resolve in it.
    """
    path = Path(path)
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}: line {lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, Mapping) or "question" not in rec:
                raise IngestError(f"{path}: line {lineno}: sample record needs a 'question'")
            gold = tuple(rec.get("gold_support", ()))
            if store is not None:
                missing = [pid for pid in gold if pid not in store]
                if missing:
                    raise IngestError(f"{path}: line {lineno}: unknown gold_support ids {missing}")
            samples.append(
                EpisodeSample(
                    question=rec["question"],
                    gold_support=gold,
                    gold_answer=rec.get("answer", ""),
                    sample_id=rec.get("id"),
                )
            )
    return tuple(samples)


def write_corpus_jsonl(store: CorpusStore, path: str | Path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for p in store.passages:
            fh.write(json.dumps({"id": p.id, "title": p.title, "text": p.text}) + "\n")
    return len(store)


def write_samples_jsonl(samples: Iterable[EpisodeSample], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            rec = {"question": s.question, "gold_support": list(s.gold_support), "answer": s.gold_answer}
            if s.sample_id is not None:
                rec["id"] = s.sample_id
            fh.write(json.dumps(rec) + "\n")
            n += 1
    return n
