"""Synthetic two-hop QA task generator.

Each sample chains two facts: a guild passage naming its leader, and a
biography passage naming the leader's birthplace (whose title IS the answer).
Filler passages pad the corpus. The template set contains exactly one good
first-hop template (the raw question, which carries the guild token) and one
good second-hop template (a birthplace query built from the latest evidence
title), so a trained policy has an unambiguous optimum.

Entity names are chosen so their feature-hash buckets never collide with each
other or with the task's fixed vocabulary; retrieval margins on the gold path
are then exact rather than at the mercy of hash noise.
"""

from __future__ import annotations

from .corpus import CorpusStore, EpisodeSample, Passage
from .embed import HashingEmbedder, tokenize

TWO_HOP_TEMPLATES: tuple[str, ...] = (
    "{question}",
    "history of {last_title} chronicle",
    "encyclopedia almanac overview entry",
    "where was {last_title} born",
    "capital region of {last_title}",
    "famous filler article digest",
)

# (bucket 0 action, bucket 1 action) that solves every sample
TWO_HOP_ORACLE_ACTIONS: tuple[int, int] = (0, 3)

TWO_HOP_NUM_BUCKETS = 2

_FIXED_VOCABULARY = (
    "where was the leader of born is member biography says in "
    "history chronicle encyclopedia almanac overview entry capital region "
    "famous filler article digest discusses topic and assorted material"
)


def _entity_suffixes(embedder: HashingEmbedder, count: int) -> list[int]:
    """Suffixes whose guild/person/town tokens occupy hash buckets unused by any
    other entity or fixed-vocabulary word."""
    used = {embedder.token_bucket(w) for w in tokenize(_FIXED_VOCABULARY)}
    chosen: list[int] = []
    i = 0
    while len(chosen) < count:
        if i > 100_000:
            raise RuntimeError("could not find enough collision-free entity names")
        buckets = {embedder.token_bucket(f"{fam}{i}") for fam in ("guild", "person", "town")}
        if len(buckets) == 3 and not (buckets & used):
            used |= buckets
            chosen.append(i)
        i += 1
    return chosen


def build_two_hop_task(
    num_samples: int = 50,
    num_fillers: int = 100,
    embedder: HashingEmbedder | None = None,
) -> CorpusStore:
    """Corpus of ``2 * num_samples`` gold passages plus fillers, with one
    two-hop sample per gold pair. Fully deterministic."""
    embedder = embedder or HashingEmbedder()
    passages: list[Passage] = []
    samples: list[EpisodeSample] = []
    for n, i in enumerate(_entity_suffixes(embedder, num_samples)):
        guild = f"guild{i}"
        person = f"person{i}"
        town = f"town{i}"
        hop1 = Passage(
            id=f"s{n:03d}-hop1",
            title=person,
            text=f"the leader of {guild} is {guild} member {person}",
        )
        hop2 = Passage(
            id=f"s{n:03d}-hop2",
            title=town,
            text=f"{person} the {person} biography says {person} was born in {town}",
        )
        passages.extend([hop1, hop2])
        samples.append(
            EpisodeSample(
                question=f"where was the leader of {guild} born",
                gold_support=(hop1.id, hop2.id),
                gold_answer=town,
                sample_id=f"sample{n:03d}",
            )
        )
    for k in range(num_fillers):
        passages.append(
            Passage(
                id=f"zz-filler{k:03d}",
                title=f"article{k} overview digest",
                text=f"article{k} digest discusses topic{k} and assorted filler material",
            )
        )
    return CorpusStore(passages, samples)
