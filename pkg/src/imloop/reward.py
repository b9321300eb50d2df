"""Answer scoring (EM / token F1), categorical KL, and episode reward assembly."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import math

from .corpus import normalize_answer


def answer_f1(prediction: str, gold: str) -> tuple[float, float, float]:
    """Token-bag F1 over normalized answers, with multiplicity.

    Returns (f1, precision, recall). Two empty normalized answers count as a
    perfect match; exactly one empty scores zero.
    """
    pred_tokens = normalize_answer(prediction).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens and not gold_tokens:
        return 1.0, 1.0, 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0, 0.0, 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0, 0.0, 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    f1 = 2 * precision * recall / (precision + recall)
    return f1, precision, recall


def answer_em(prediction: str, gold: str) -> int:
    return int(normalize_answer(prediction) == normalize_answer(gold))


def kl_categorical(p: Sequence[float], q: Sequence[float]) -> float:
    """KL(p || q) for categorical distributions over the same support."""
    if len(p) != len(q):
        raise ValueError(f"support mismatch: {len(p)} vs {len(q)}")
    total = 0.0
    for pi, qi in zip(p, q):
        if pi < 0 or qi < 0:
            raise ValueError("probabilities must be non-negative")
        if pi == 0:
            continue
        if qi == 0:
            raise ValueError("q is zero where p has mass (degenerate reference policy)")
        total += pi * math.log(pi / qi)
    return total


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-episode reward terms. ``total`` is exactly the sum of the stored
    turn terms plus the answer term minus the weighted KL term."""

    turn_terms: tuple[float, ...]
    f1_term: float
    kl_term: float
    alpha: float
    total: float

    def to_json(self) -> dict:
        return {
            "turn_terms": list(self.turn_terms),
            "f1_term": self.f1_term,
            "kl_term": self.kl_term,
            "alpha": self.alpha,
            "total": self.total,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RewardBreakdown":
        return cls(
            turn_terms=tuple(data["turn_terms"]),
            f1_term=data["f1_term"],
            kl_term=data["kl_term"],
            alpha=data["alpha"],
            total=data["total"],
        )


def compose_reward(
    distances: Sequence[float],
    gamma: float,
    f1: float,
    kl: float = 0.0,
    alpha: float = 0.0,
) -> RewardBreakdown:
    """Assemble the episode reward: discounted per-turn retrieval terms plus the
    answer F1, penalized by the weighted policy KL."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    turn_terms = tuple(gamma**i * (1.0 - d) for i, d in enumerate(distances, 1))
    total = sum(turn_terms) + f1 - alpha * kl
    return RewardBreakdown(turn_terms, f1, kl, alpha, total)


def clip_surrogate(ratio: float, advantage: float, clip_epsilon: float) -> float:
    """The clipped policy-gradient objective for one step:
    min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)."""
    clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(ratio * advantage, clipped * advantage)
