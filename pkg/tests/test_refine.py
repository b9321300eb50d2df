import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imloop.corpus import Passage
from imloop.embed import HashingEmbedder
from imloop.index import build_index
from imloop.llm import ChatEndpoint
from imloop.refine import (
    DenseRetriever,
    IdentityRefiner,
    LexicalOverlapRefiner,
    ListwiseLlmRefiner,
    MalformedRankingError,
    parse_ranking,
    retrieve,
)

from conftest import chat_reply, make_store


def _candidates(texts):
    return [
        (Passage(f"c{i}", f"Title {i}", text), 1.0 - 0.1 * i) for i, text in enumerate(texts)
    ]


# ---------------------------------------------------------------------------
# retrieve


def test_retrieve_singleton_corpus(hash_provider):
    store = make_store([("only", "Only", "some passage text")])
    index = build_index(store, hash_provider)
    hits = retrieve(index, store, hash_provider, "whatever query", 5)
    assert [p.id for p, _ in hits] == ["only"]


def test_retrieve_exact_text_ranks_first(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    target = tiny_store.get("p3")
    hits = retrieve(index, store=tiny_store, provider=hash_provider, query=target.text, n=3)
    assert hits[0][0].id == "p3"
    assert abs(hits[0][1] - 1.0) < 1e-6


def test_retrieve_saturates(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    assert len(retrieve(index, tiny_store, hash_provider, "alabama", 20)) == 3


def test_retrieve_validates_inputs(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    with pytest.raises(ValueError):
        retrieve(index, tiny_store, hash_provider, "   ", 5)
    with pytest.raises(ValueError):
        retrieve(index, tiny_store, hash_provider, "ok", 0)


def test_dense_retriever_binding(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    retriever = DenseRetriever(index, tiny_store, hash_provider)
    assert retriever.retrieve("elephant costume", 2)[0][0].id == "p2"


# ---------------------------------------------------------------------------
# identity


def test_identity_passthrough():
    cands = _candidates(["a", "b", "c", "d", "e"])
    refined = IdentityRefiner(top_k=5).refine("q", cands)
    assert [p.id for p in refined.passages] == ["c0", "c1", "c2", "c3", "c4"]
    assert refined.origin_scores == tuple(s for _, s in cands)
    assert refined.fallback_reason is None


def test_identity_truncates():
    refined = IdentityRefiner(top_k=2).refine("q", _candidates(["a", "b", "c"]))
    assert [p.id for p in refined.passages] == ["c0", "c1"]


# ---------------------------------------------------------------------------
# lexical


def test_lexical_overlap_hand_example():
    a = Passage("a", "A", "the crimson tide mascot history")
    b = Passage("b", "B", "a crimson colored paint")
    refined = LexicalOverlapRefiner(top_k=5).refine("crimson tide mascot", [(b, 0.9), (a, 0.8)])
    assert [p.id for p in refined.passages] == ["a", "b"]
    assert refined.origin_scores[0] == 1.0
    assert abs(refined.origin_scores[1] - 1 / 3) < 1e-12


def test_lexical_zero_overlap_preserves_order():
    cands = _candidates(["xx yy", "zz ww", "vv uu"])
    refined = LexicalOverlapRefiner(top_k=3).refine("nothing matches qq", cands)
    assert [p.id for p in refined.passages] == ["c0", "c1", "c2"]
    assert refined.origin_scores == (0.0, 0.0, 0.0)


def test_lexical_empty_query_tokens():
    refined = LexicalOverlapRefiner(top_k=2).refine("???", _candidates(["a", "b"]))
    assert [p.id for p in refined.passages] == ["c0", "c1"]


# ---------------------------------------------------------------------------
# llm-listwise


def test_parse_ranking_tolerant():
    assert parse_ranking("[2] > [1] > [3]", 3) == [1, 0, 2]
    assert parse_ranking("I think [3] then [3] and [99]", 3) == [2, 0, 1]
    with pytest.raises(MalformedRankingError):
        parse_ranking("no indices here", 3)


def test_listwise_applies_permutation(stub_endpoint):
    ep = stub_endpoint(lambda path, payload: (200, chat_reply("[2] > [1] > [3]")))
    refiner = ListwiseLlmRefiner(ChatEndpoint(url=ep.url), top_k=3)
    refined = refiner.refine("q", _candidates(["a", "b", "c"]))
    assert [p.id for p in refined.passages] == ["c1", "c0", "c2"]
    assert refined.fallback_reason is None


def test_listwise_malformed_falls_back_flagged(stub_endpoint):
    ep = stub_endpoint(lambda path, payload: (200, chat_reply("I refuse to rank.")))
    refiner = ListwiseLlmRefiner(ChatEndpoint(url=ep.url), top_k=2)
    refined = refiner.refine("q", _candidates(["a", "b", "c"]))
    assert [p.id for p in refined.passages] == ["c0", "c1"]
    assert "malformed" in refined.fallback_reason


def test_listwise_transport_failure_falls_back(stub_endpoint):
    ep = stub_endpoint(lambda path, payload: (500, {"error": "down"}))
    endpoint = ChatEndpoint(url=ep.url, max_retries=1, retry_backoff=0.01)
    refined = ListwiseLlmRefiner(endpoint, top_k=2).refine("q", _candidates(["a", "b"]))
    assert [p.id for p in refined.passages] == ["c0", "c1"]
    assert "endpoint failure" in refined.fallback_reason
    assert len(ep.requests) == 2  # initial call plus one retry


def test_listwise_truncates_long_passages(stub_endpoint):
    ep = stub_endpoint(lambda path, payload: (200, chat_reply("[1]")))
    refiner = ListwiseLlmRefiner(ChatEndpoint(url=ep.url), top_k=1, max_passage_tokens=8)
    long_text = " ".join(f"tok{i}" for i in range(100))
    refiner.refine("q", [(Passage("p", "T", long_text), 1.0)])
    sent = ep.requests[0]["messages"][1]["content"]
    assert "tok7" in sent and "tok8" not in sent


# ---------------------------------------------------------------------------
# shared properties

texts = st.lists(
    st.text(alphabet="abcdefg ", min_size=1, max_size=12).filter(str.strip), min_size=1, max_size=8
)


@given(texts, st.integers(min_value=1, max_value=6))
@settings(max_examples=150)
def test_refine_is_subsequence_permutation(passage_texts, top_k):
    cands = _candidates(passage_texts)
    for strategy in (IdentityRefiner(top_k=top_k), LexicalOverlapRefiner(top_k=top_k)):
        refined = strategy.refine("abc def", cands)
        ids = [p.id for p in refined.passages]
        assert len(ids) == len(set(ids))
        assert len(ids) <= min(top_k, len(cands))
        source_ids = {p.id for p, _ in cands}
        assert all(i in source_ids for i in ids)
        assert all(0.0 <= s <= 1.0 for s in LexicalOverlapRefiner(top_k=top_k).refine("abc", cands).origin_scores)


def test_refine_rejects_empty_candidates():
    with pytest.raises(ValueError):
        IdentityRefiner().refine("q", [])
