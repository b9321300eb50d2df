import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imloop.corpus import (
    CorpusStore,
    EpisodeSample,
    IngestError,
    Passage,
    ingest_corpus,
    load_samples,
    normalize_answer,
    write_corpus_jsonl,
    write_samples_jsonl,
)


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def test_ingest_jsonl_counts_and_lookup(tmp_path):
    records = [
        {"id": "a", "title": "A", "text": "alpha text"},
        {"id": "b", "title": "B", "text": "beta text"},
        {"id": "c", "title": "C", "text": "gamma text"},
    ]
    path = tmp_path / "corpus.jsonl"
    _write_jsonl(path, records)
    store = ingest_corpus(path)
    assert len(store) == 3
    for rec in records:
        p = store.get(rec["id"])
        assert (p.id, p.title, p.text) == (rec["id"], rec["title"], rec["text"])


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert len(ingest_corpus(path)) == 0


def test_ingest_malformed_line_cites_line_number(tmp_path):
    records = [{"id": f"p{i}", "title": f"T{i}", "text": f"text {i}"} for i in range(10)]
    lines = [json.dumps(r) for r in records]
    lines[6] = '{"id": "p6", "title": broken'
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(IngestError, match="line 7"):
        ingest_corpus(path)


def test_ingest_missing_field_is_malformed(tmp_path):
    path = tmp_path / "bad.jsonl"
    _write_jsonl(path, [{"id": "a", "title": "A"}])
    with pytest.raises(IngestError, match="line 1.*text"):
        ingest_corpus(path)


def test_duplicate_id_rejected(tmp_path):
    path = tmp_path / "dup.jsonl"
    _write_jsonl(
        path,
        [
            {"id": "same", "title": "A", "text": "one"},
            {"id": "same", "title": "B", "text": "two"},
        ],
    )
    with pytest.raises(IngestError, match="same"):
        ingest_corpus(path)


def test_empty_text_rejected():
    with pytest.raises(IngestError):
        CorpusStore([Passage("a", "A", "")])


def test_ingest_hotpotqa_format(tmp_path):
    entries = [
        {
            "_id": "q1",
            "question": "who leads the tide",
            "answer": "Big Al",
            "context": [
                ["Crimson Tide", ["The crimson tide has a mascot.", " It is Big Al."]],
                ["Big Al", ["Big Al is an elephant."]],
            ],
            "supporting_facts": [["Crimson Tide", 0], ["Big Al", 0], ["Crimson Tide", 1]],
        },
        {
            "_id": "q2",
            "question": "where is the city",
            "answer": "Alabama",
            "context": [
                ["Tuscaloosa", ["Tuscaloosa is in Alabama."]],
                ["Big Al", ["Big Al is an elephant."]],
            ],
            "supporting_facts": [["Tuscaloosa", 0]],
        },
    ]
    path = tmp_path / "hotpot.json"
    path.write_text(json.dumps(entries), encoding="utf-8")
    store = ingest_corpus(path, "hotpotqa-json")
    assert len(store) == 3  # Big Al deduplicated across entries
    assert store.get("Crimson Tide").text == "The crimson tide has a mascot. It is Big Al."
    assert len(store.samples) == 2
    s1, s2 = store.samples
    assert s1.sample_id == "q1"
    assert s1.gold_support == ("Crimson Tide", "Big Al")  # unique titles, order kept
    assert s1.gold_answer == "Big Al"
    assert s2.gold_support == ("Tuscaloosa",)


def test_ingest_hotpotqa_unresolvable_support(tmp_path):
    entries = [
        {
            "_id": "q1",
            "question": "q",
            "answer": "a",
            "context": [["Here", ["text."]]],
            "supporting_facts": [["Missing", 0]],
        }
    ]
    path = tmp_path / "hotpot.json"
    path.write_text(json.dumps(entries), encoding="utf-8")
    with pytest.raises(IngestError, match="Missing"):
        ingest_corpus(path, "hotpotqa-json")


def test_load_samples_validates_gold_ids(tmp_path, tiny_store):
    path = tmp_path / "samples.jsonl"
    _write_jsonl(path, [{"question": "q", "gold_support": ["nope"], "answer": "a"}])
    with pytest.raises(IngestError, match="nope"):
        load_samples(path, tiny_store)


def test_corpus_and_samples_round_trip(tmp_path, tiny_store):
    samples = (EpisodeSample("who?", ("p1",), "big al", sample_id="s0"),)
    cpath, spath = tmp_path / "c.jsonl", tmp_path / "s.jsonl"
    write_corpus_jsonl(tiny_store, cpath)
    write_samples_jsonl(samples, spath)
    store2 = ingest_corpus(cpath)
    assert store2.passages == tiny_store.passages
    assert load_samples(spath, store2) == samples


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("yes", "yes"),
        ("The Catcher in the Rye!", "catcher in rye"),
        ("  An  APPLE, a day ", "apple day"),
        ("don't", "dont"),
        ("", ""),
    ],
)
def test_normalize_answer_fixtures(raw, expected):
    assert normalize_answer(raw) == expected


@given(st.text(max_size=80))
@settings(max_examples=300)
def test_normalize_answer_idempotent(s):
    once = normalize_answer(s)
    assert normalize_answer(once) == once


@given(st.text(max_size=80))
@settings(max_examples=300)
def test_normalize_answer_output_shape(s):
    import unicodedata

    out = normalize_answer(s)
    assert out == out.strip()
    assert "  " not in out
    assert not any(unicodedata.category(ch).startswith("P") for ch in out)
    assert not any(tok in ("a", "an", "the") for tok in out.split())
