"""Progress tracking: per-turn distance against the remaining gold passages,
discounted accumulation, and the questioner/answerer switch rule."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .corpus import Passage
from .embed import EmbeddingProvider, cosine

QUESTIONER = "questioner"
ANSWERER = "answerer"


@dataclass(frozen=True)
class TrackerState:
    """Value object updated functionally once per turn.

    The turn count is always len(distances); distances live in [0, 2] because
    they are one minus a cosine.
    """

    remaining_gold: tuple[Passage, ...]
    distances: tuple[float, ...] = ()
    gamma: float = 0.9
    switch_threshold: float = 0.3
    max_turns: int = 3

    @property
    def turn(self) -> int:
        return len(self.distances)


@dataclass(frozen=True)
class RoleDecision:
    role: str  # questioner | answerer
    reason: str  # below-threshold | above-threshold | turn-cap | gold-exhausted


def closest_gold(
    state: TrackerState, pr: Passage, provider: EmbeddingProvider
) -> tuple[Passage, float]:
    """The remaining gold passage most similar to ``pr`` (ties: ascending id)."""
    if not state.remaining_gold:
        raise ValueError("no gold passages remain; callers must check before scoring")
    pr_vec = provider.embed_text(pr.text)
    best: Passage | None = None
    best_sim = 0.0
    for p in state.remaining_gold:
        sim = cosine(pr_vec, provider.embed_text(p.text))
        if best is None or sim > best_sim or (sim == best_sim and p.id < best.id):
            best, best_sim = p, sim
    assert best is not None
    return best, best_sim


def score_turn(
    state: TrackerState, pr: Passage, provider: EmbeddingProvider
) -> tuple[float, TrackerState]:
    """Score one turn: d = 1 - cos(pr, closest gold); the matched gold passage is
    consumed, so later turns are scored against a shrinking set."""
    closest, sim = closest_gold(state, pr, provider)
    d = 1.0 - sim
    remaining = tuple(p for p in state.remaining_gold if p.id != closest.id)
    return d, replace(state, remaining_gold=remaining, distances=state.distances + (d,))


def accumulated_score(state: TrackerState) -> float:
    """Discounted retrieval progress: sum of gamma^i * (1 - d_i), i starting at 1."""
    return sum(state.gamma**i * (1.0 - d) for i, d in enumerate(state.distances, 1))


def decide_role(state: TrackerState, mode: str = "train") -> RoleDecision:
    """Switch rule. Training continues questioning only while the accumulated
    score is at or below the threshold, the turn cap is not reached, and gold
    passages remain; inference ignores gold (it has none) and runs on the cap."""
    score = accumulated_score(state)
    if mode == "train" and score > state.switch_threshold:
        return RoleDecision(ANSWERER, "above-threshold")
    if state.turn >= state.max_turns:
        return RoleDecision(ANSWERER, "turn-cap")
    if mode == "train" and not state.remaining_gold:
        return RoleDecision(ANSWERER, "gold-exhausted")
    return RoleDecision(QUESTIONER, "below-threshold")
