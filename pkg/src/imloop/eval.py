"""Dataset-level metrics (EM, F1, passage EM) and McNemar paired significance
testing over prediction runs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

from .corpus import EpisodeSample
from .episode import EpisodeResult
from .reward import answer_em, answer_f1

DEFAULT_EXACT_THRESHOLD = 100  # discordant-pair count above which chi-square is used
SIGNIFICANCE_LEVEL = 0.05


@dataclass(frozen=True)
class SampleScore:
    sample_id: str
    em: int
    f1: float
    passage_em: int


@dataclass(frozen=True)
class RunReport:
    per_sample: tuple[SampleScore, ...]
    em_pct: float
    f1_pct: float
    passage_em_pct: float
    fingerprint: str = ""

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "aggregates": {
                "em": self.em_pct,
                "f1": self.f1_pct,
                "passage_em": self.passage_em_pct,
            },
            "per_sample": [
                {"id": s.sample_id, "em": s.em, "f1": s.f1, "passage_em": s.passage_em}
                for s in self.per_sample
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunReport":
        per_sample = tuple(
            SampleScore(r["id"], r["em"], r["f1"], r["passage_em"]) for r in data["per_sample"]
        )
        agg = data["aggregates"]
        return cls(per_sample, agg["em"], agg["f1"], agg["passage_em"], data.get("fingerprint", ""))


@dataclass(frozen=True)
class McNemarResult:
    b: int  # first run correct, second wrong
    c: int  # first run wrong, second correct
    p_value: float
    significant: bool
    method: str


def passage_em(retrieved_ids: frozenset[str] | set[str], gold_ids: set[str]) -> int:
    """1 iff every gold supporting passage was retrieved during the episode."""
    if not gold_ids:
        raise ValueError("passage_em requires a non-empty gold set")
    return int(gold_ids <= set(retrieved_ids))


def evaluate_run(
    results: Sequence[EpisodeResult],
    samples: Sequence[EpisodeSample],
    fingerprint: str = "",
) -> RunReport:
    """Score each prediction against its sample and aggregate to percentages."""
    if len(results) != len(samples):
        raise ValueError(f"got {len(results)} results for {len(samples)} samples")
    offenders = [
        (r.sample_id, s.sid) for r, s in zip(results, samples) if r.sample_id != s.sid
    ]
    if offenders:
        raise ValueError(f"result/sample id mismatches: {offenders}")

    scores = []
    for result, sample in zip(results, samples):
        prediction = result.transcript.final_answer or ""
        em = answer_em(prediction, sample.gold_answer)
        f1, _, _ = answer_f1(prediction, sample.gold_answer)
        pem = passage_em(result.transcript.retrieved_ids(), set(sample.gold_support))
        scores.append(SampleScore(sample.sid, em, f1, pem))

    n = len(scores)
    return RunReport(
        per_sample=tuple(scores),
        em_pct=100.0 * sum(s.em for s in scores) / n,
        f1_pct=100.0 * sum(s.f1 for s in scores) / n,
        passage_em_pct=100.0 * sum(s.passage_em for s in scores) / n,
        fingerprint=fingerprint,
    )


def format_report(report: RunReport) -> str:
    lines = [
        f"EM {report.em_pct:.1f}",
        f"F1 {report.f1_pct:.1f}",
        f"Passage EM {report.passage_em_pct:.1f}",
        f"samples {len(report.per_sample)}",
    ]
    if report.fingerprint:
        lines.append(f"fingerprint {report.fingerprint}")
    return "\n".join(lines)


def mcnemar_test(
    run_a: Sequence[int],
    run_b: Sequence[int],
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD,
    significance: float = SIGNIFICANCE_LEVEL,
) -> McNemarResult:
    """Paired McNemar test on aligned 0/1 correctness vectors.

    Small discordant counts use the exact two-sided binomial
    p = min(1, 2 * sum_{k<=min(b,c)} C(b+c, k) / 2^(b+c)); counts above
    ``exact_threshold`` switch to the continuity-corrected chi-square form.
    """
    if len(run_a) != len(run_b):
        raise ValueError(f"length mismatch: {len(run_a)} vs {len(run_b)}")
    b = sum(1 for x, y in zip(run_a, run_b) if x == 1 and y == 0)
    c = sum(1 for x, y in zip(run_a, run_b) if x == 0 and y == 1)
    n = b + c
    if n == 0:
        p = 1.0
        method = "exact-binomial"
    elif n <= exact_threshold:
        tail = sum(math.comb(n, k) for k in range(min(b, c) + 1))
        p = min(1.0, 2.0 * tail * 0.5**n)
        method = "exact-binomial"
    else:
        stat = (abs(b - c) - 1) ** 2 / n
        p = math.erfc(math.sqrt(stat / 2.0))  # chi-square(1) survival function
        method = "chi-square"
    return McNemarResult(b=b, c=c, p_value=p, significant=p < significance, method=method)


def em_bits_by_id(report: RunReport) -> dict[str, int]:
    return {s.sample_id: s.em for s in report.per_sample}


def mcnemar_from_reports(
    report_a: RunReport, report_b: RunReport, exact_threshold: int = DEFAULT_EXACT_THRESHOLD
) -> McNemarResult:
    """Align two reports by sample id and run the test on their EM bits."""
    bits_a = em_bits_by_id(report_a)
    bits_b = em_bits_by_id(report_b)
    if set(bits_a) != set(bits_b):
        only_a = sorted(set(bits_a) - set(bits_b))[:5]
        only_b = sorted(set(bits_b) - set(bits_a))[:5]
        raise ValueError(f"sample id sets differ (e.g. only in A: {only_a}, only in B: {only_b})")
    ids = sorted(bits_a)
    return mcnemar_test([bits_a[i] for i in ids], [bits_b[i] for i in ids], exact_threshold)


def write_report_json(path, report: RunReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2)
        fh.write("\n")


def read_report_json(path) -> RunReport:
    with open(path, encoding="utf-8") as fh:
        return RunReport.from_json(json.load(fh))
