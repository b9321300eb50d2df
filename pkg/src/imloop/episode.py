"""The episode engine: drive questioner -> retrieve -> refine -> track cycles
until the role flips to answering, plus the batch runner and JSONL persistence."""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import CorpusStore, EpisodeSample, Passage
from .embed import CachingProvider, EmbeddingProvider
from .reasoner import (
    ActionInfo,
    QueryExhaustedError,
    QueryExtractionError,
    ReadyToAnswer,
    Transcript,
    Turn,
    transcript_from_json,
    transcript_to_json,
)
from .refine import RefinerStrategy
from .reward import RewardBreakdown, answer_f1, compose_reward
from .tracker import QUESTIONER, TrackerState, decide_role, score_turn

SCHEMA_VERSION = 1

MODE_TRAIN = "train"
MODE_INFER = "infer"

STOP_FIXED_TURNS = "fixed-turns"
STOP_REASONER_DECLARED = "reasoner-declared"


class Retriever(Protocol):
    def retrieve(self, query: str, n: int) -> list[tuple[Passage, float]]: ...


class Questioner(Protocol):
    def propose_query(self, transcript: Transcript, rng_seed: int = 0): ...


class Answerer(Protocol):
    def answer(self, transcript: Transcript) -> str: ...


@dataclass(frozen=True)
class Backends:
    questioner: Questioner
    answerer: Answerer


@dataclass
class Pipeline:
    """The shared, read-only retrieval stack episodes run against."""

    retriever: Retriever
    refiner: RefinerStrategy
    provider: EmbeddingProvider
    store: CorpusStore


@dataclass(frozen=True)
class EpisodeConfig:
    mode: str = MODE_TRAIN
    retriever_fanout: int = 20
    gamma: float = 0.9
    switch_threshold: float = 0.3
    max_turns: int = 3
    stop_policy: str = STOP_FIXED_TURNS  # inference only
    refiner_query_source: str = "turn"  # "turn" passes q_i to the refiner, "question" the original Q
    seed: int = 0


@dataclass
class EpisodeResult:
    sample_id: str
    transcript: Transcript
    tracker_final: TrackerState | None = None
    actions: tuple[ActionInfo | None, ...] = ()
    reward: RewardBreakdown | None = None
    timings: dict[str, float] = field(default_factory=dict)
    error: str | None = None


def run_episode(
    sample: EpisodeSample,
    backends: Backends,
    pipeline: Pipeline,
    config: EpisodeConfig,
    seed: int | None = None,
) -> EpisodeResult:
    """One full episode. Training mode scores every turn against the sample's
    gold passages and lets the tracker flip the role; inference mode never
    touches gold and stops on the configured policy. Soft backend failures end
    the loop and fall through to answering; hard failures preserve the partial
    transcript with the error recorded."""
    if config.mode not in (MODE_TRAIN, MODE_INFER):
        raise ValueError(f"unknown mode {config.mode!r}")
    train = config.mode == MODE_TRAIN
    episode_seed = config.seed if seed is None else seed
    timings: dict[str, float] = {"propose": 0.0, "retrieve": 0.0, "refine": 0.0, "track": 0.0}

    state = None
    if train:
        if not sample.gold_support:
            raise ValueError(f"training episode for {sample.sid!r} needs gold_support")
        gold = tuple(pipeline.store.get(pid) for pid in sample.gold_support)
        state = TrackerState(
            remaining_gold=gold,
            gamma=config.gamma,
            switch_threshold=config.switch_threshold,
            max_turns=config.max_turns,
        )

    provider = CachingProvider(pipeline.provider)
    turns: list[Turn] = []
    actions: list[ActionInfo | None] = []
    error: str | None = None

    # Inference has no gold to track: fixed-turns runs to the cap, while
    # reasoner-declared additionally stops when a backend raises ReadyToAnswer.
    while True:
        if train:
            if decide_role(state).role != QUESTIONER:
                break
        elif len(turns) >= config.max_turns:
            break
        transcript = Transcript(sample.question, tuple(turns))
        t0 = time.perf_counter()
        try:
            query, info = backends.questioner.propose_query(
                transcript, rng_seed=episode_seed * 1000 + len(turns)
            )
        except ReadyToAnswer:
            break
        except (QueryExtractionError, QueryExhaustedError) as exc:
            error = f"questioner: {exc}"
            break
        finally:
            timings["propose"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        candidates = pipeline.retriever.retrieve(query, config.retriever_fanout)
        timings["retrieve"] += time.perf_counter() - t0
        if not candidates:
            error = "retriever returned no candidates"
            break

        refine_query = query if config.refiner_query_source == "turn" else sample.question
        t0 = time.perf_counter()
        refined = pipeline.refiner.refine(refine_query, candidates)
        timings["refine"] += time.perf_counter() - t0

        distance = None
        if train:
            t0 = time.perf_counter()
            distance, state = score_turn(state, refined.passages[0], provider)
            timings["track"] += time.perf_counter() - t0
        turns.append(Turn(query=query, refined=refined, distance=distance))
        actions.append(info)

    transcript = Transcript(sample.question, tuple(turns))
    t0 = time.perf_counter()
    try:
        answer = backends.answerer.answer(transcript)
        transcript = Transcript(sample.question, tuple(turns), final_answer=answer)
    except Exception as exc:  # noqa: BLE001 - answerer failures must not kill the batch
        error = error or f"answerer: {exc}"
    timings["answer"] = time.perf_counter() - t0

    reward = None
    if train and transcript.final_answer is not None and sample.gold_answer:
        f1, _, _ = answer_f1(transcript.final_answer, sample.gold_answer)
        reward = compose_reward(state.distances, config.gamma, f1)

    return EpisodeResult(
        sample_id=sample.sid,
        transcript=transcript,
        tracker_final=state,
        actions=tuple(actions),
        reward=reward,
        timings=timings,
        error=error,
    )


def run_dataset(
    samples: Sequence[EpisodeSample],
    backends: Backends,
    pipeline: Pipeline,
    config: EpisodeConfig,
    parallelism: int = 1,
) -> list[EpisodeResult]:
    """Run one episode per sample. Results keep input order and each episode's
    seed is config.seed + its index, so output is identical at any parallelism.
    Individual failures are recorded on the result; the batch continues."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    def one(i_sample: tuple[int, EpisodeSample]) -> EpisodeResult:
        i, sample = i_sample
        try:
            return run_episode(sample, backends, pipeline, config, seed=config.seed + i)
        except Exception as exc:  # noqa: BLE001 - keep the batch alive
            return EpisodeResult(
                sample_id=sample.sid,
                transcript=Transcript(sample.question),
                error=f"episode failed: {exc}",
            )

    items = list(enumerate(samples))
    if parallelism == 1:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(one, items))


def result_to_json(result: EpisodeResult) -> dict:
    """Serializable view of one result. Timings are deliberately excluded so
    identical configurations produce byte-identical transcript files."""
    return {
        "sample_id": result.sample_id,
        "transcript": transcript_to_json(result.transcript),
        "reward": result.reward.to_json() if result.reward else None,
        "error": result.error,
    }


def result_from_json(data: dict) -> EpisodeResult:
    return EpisodeResult(
        sample_id=data["sample_id"],
        transcript=transcript_from_json(data["transcript"]),
        reward=RewardBreakdown.from_json(data["reward"]) if data.get("reward") else None,
        error=data.get("error"),
    )


def write_results_jsonl(
    path: str | Path, results: Iterable[EpisodeResult], fingerprint: str = ""
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION, "fingerprint": fingerprint}) + "\n")
        for r in results:
            fh.write(json.dumps(result_to_json(r)) + "\n")


def read_results_jsonl(path: str | Path) -> tuple[str, list[EpisodeResult]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {header.get('schema_version')}")
        results = [result_from_json(json.loads(line)) for line in fh if line.strip()]
    return header.get("fingerprint", ""), results
