"""Clipped policy-gradient trainer for the template-policy questioner.

The policy is a tabular softmax over query templates per turn bucket, updated
with the clipped surrogate objective against batch-mean-centered episode
rewards. There is no value network: the policy is contextual-bandit sized, so
a batch baseline is the whole credit-assignment story.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import EpisodeSample
from .episode import Backends, EpisodeConfig, Pipeline, run_episode
from .reasoner import PolicyParams, TemplatePolicyQuestioner, log_softmax, softmax
from .reward import answer_f1, compose_reward, kl_categorical
from .tracker import accumulated_score


@dataclass(frozen=True)
class TrainerConfig:
    alpha: float = 0.2  # KL penalty weight
    clip_epsilon: float = 0.2
    learning_rate: float = 0.05
    batch_episodes: int = 32
    iterations: int = 200
    update_steps: int = 4  # full-batch gradient steps per iteration
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError("clip_epsilon must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass(frozen=True)
class PolicyStep:
    """One sampled action with the log-prob it had under the sampling policy
    and the advantage of the episode it belongs to."""

    bucket: int
    action: int
    log_prob_old: float
    advantage: float


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    mean_reward: float
    mean_accumulated: float
    mean_f1: float
    kl: float


def policy_kl(params: PolicyParams, reference: PolicyParams) -> float:
    """Mean over buckets of KL(current action distribution || reference)."""
    if params.logits.shape != reference.logits.shape:
        raise ValueError("policy shapes differ")
    values = [
        kl_categorical(params.probs(b).tolist(), reference.probs(b).tolist())
        for b in range(params.num_buckets)
    ]
    return float(np.mean(values))


def surrogate_value(
    logits: np.ndarray, steps: Sequence[PolicyStep], clip_epsilon: float
) -> float:
    """Mean clipped surrogate objective over the collected steps."""
    if not steps:
        return 0.0
    total = 0.0
    log_probs = {b: log_softmax(logits[b]) for b in {s.bucket for s in steps}}
    for s in steps:
        ratio = float(np.exp(log_probs[s.bucket][s.action] - s.log_prob_old))
        clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
        total += min(ratio * s.advantage, clipped * s.advantage)
    return total / len(steps)


def surrogate_gradient(
    logits: np.ndarray, steps: Sequence[PolicyStep], clip_epsilon: float
) -> np.ndarray:
    """Analytic gradient of surrogate_value with respect to the logits.

    A step contributes nothing once its ratio leaves the clip interval on the
    side the advantage pushes toward (the clipped branch is constant there).
    """
    grad = np.zeros_like(logits)
    if not steps:
        return grad
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for b in {s.bucket for s in steps}:
        lp = log_softmax(logits[b])
        cache[b] = (lp, np.exp(lp))
    for s in steps:
        lp, probs = cache[s.bucket]
        ratio = float(np.exp(lp[s.action] - s.log_prob_old))
        if (s.advantage > 0 and ratio > 1.0 + clip_epsilon) or (
            s.advantage < 0 and ratio < 1.0 - clip_epsilon
        ):
            continue
        coeff = ratio * s.advantage
        grad[s.bucket] -= coeff * probs
        grad[s.bucket, s.action] += coeff
    return grad / len(steps)


def train_toy_questioner(
    samples: Sequence[EpisodeSample],
    initial_params: PolicyParams,
    answerer,
    pipeline: Pipeline,
    trainer_config: TrainerConfig,
    episode_config: EpisodeConfig,
) -> tuple[PolicyParams, list[IterationStats]]:
    """Train the template policy on epsodic rewards.

    Each iteration collects a batch of episodes with the current policy,
    composes the per-episode reward (discounted turn terms + answer F1 - the
    weighted KL back to the initial policy), centers rewards into advantages,
    and takes a few clipped-surrogate gradient steps. Returns the trained
    parameters and the per-iteration curve.
    """
    if initial_params.num_actions < 2:
        raise ValueError("policy needs at least 2 actions to train")
    if not samples:
        raise ValueError("empty training dataset")

    reference = initial_params.copy()
    params = initial_params.copy()
    curve: list[IterationStats] = []

    for iteration in range(trainer_config.iterations):
        sampling = params.copy()
        questioner = TemplatePolicyQuestioner(sampling)
        backends = Backends(questioner=questioner, answerer=answerer)
        kl = policy_kl(sampling, reference)

        rewards: list[float] = []
        accumulated: list[float] = []
        f1s: list[float] = []
        episode_steps: list[list[PolicyStep]] = []
        base = trainer_config.seed + iteration * trainer_config.batch_episodes
        for j in range(trainer_config.batch_episodes):
            sample = samples[(iteration * trainer_config.batch_episodes + j) % len(samples)]
            result = run_episode(sample, backends, pipeline, episode_config, seed=base + j)
            f1, _, _ = answer_f1(result.transcript.final_answer or "", sample.gold_answer)
            breakdown = compose_reward(
                result.tracker_final.distances,
                episode_config.gamma,
                f1,
                kl=kl,
                alpha=trainer_config.alpha,
            )
            rewards.append(breakdown.total)
            accumulated.append(accumulated_score(result.tracker_final))
            f1s.append(f1)
            episode_steps.append(
                [
                    PolicyStep(a.bucket, a.action, a.log_prob, 0.0)
                    for a in result.actions
                    if a is not None
                ]
            )

        mean_reward = float(np.mean(rewards))
        steps = [
            PolicyStep(s.bucket, s.action, s.log_prob_old, r - mean_reward)
            for r, ep in zip(rewards, episode_steps)
            for s in ep
        ]

        for _ in range(trainer_config.update_steps):
            grad = surrogate_gradient(params.logits, steps, trainer_config.clip_epsilon)
            if not np.isfinite(grad).all():
                raise RuntimeError(
                    f"non-finite policy gradient at iteration {iteration}; "
                    "lower the learning rate or inspect the reward scale"
                )
            params.logits = params.logits + trainer_config.learning_rate * grad

        curve.append(
            IterationStats(
                iteration=iteration,
                mean_reward=mean_reward,
                mean_accumulated=float(np.mean(accumulated)),
                mean_f1=float(np.mean(f1s)),
                kl=kl,
            )
        )

    return params, curve


def write_curve_csv(path: str | Path, curve: Sequence[IterationStats]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_reward", "mean_accumulated", "mean_f1", "kl"])
        for row in curve:
            writer.writerow(
                [row.iteration, row.mean_reward, row.mean_accumulated, row.mean_f1, row.kl]
            )


def save_policy(path: str | Path, params: PolicyParams) -> None:
    import json

    Path(path).write_text(json.dumps(params.to_json(), indent=2), encoding="utf-8")


def load_policy(path: str | Path) -> PolicyParams:
    import json

    return PolicyParams.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
