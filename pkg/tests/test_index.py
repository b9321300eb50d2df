import time

import numpy as np
import pytest

from imloop.corpus import CorpusStore, Passage
from imloop.embed import HashingEmbedder
from imloop.index import IndexError_, VectorIndex, build_index, kmeans

from conftest import make_store


def _random_store(n, seed=0, tokens=6):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        words = " ".join(f"w{rng.integers(0, 5000)}" for _ in range(tokens))
        rows.append((f"p{i:05d}", f"T{i}", words))
    return make_store(rows)


def brute_force_search(index: VectorIndex, query: np.ndarray, k: int):
    """Independent oracle: full scan, full sort by (-score, id)."""
    scores = index.matrix @ np.asarray(query, dtype=np.float32)
    order = sorted(range(len(index.ids)), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order[:k]]


def test_build_counts(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    assert len(index) == 3
    assert index.dim == hash_provider.dim


def test_build_empty_store_rejected(hash_provider):
    with pytest.raises(IndexError_):
        build_index(CorpusStore([]), hash_provider)


def test_rebuild_is_deterministic(hash_provider):
    store = _random_store(200, seed=3)
    a = build_index(store, hash_provider, variant="ivf", num_clusters=8, num_probes=2, seed=5)
    b = build_index(store, hash_provider, variant="ivf", num_clusters=8, num_probes=2, seed=5)
    assert np.array_equal(a.matrix, b.matrix)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)


def test_search_saturates_at_corpus_size(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    hits = index.search(hash_provider.embed_text("anything at all"), k=50)
    assert len(hits) == 3
    assert sorted(h.passage_id for h in hits) == ["p1", "p2", "p3"]


def test_self_retrieval_scores_one(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    target = tiny_store.get("p2")
    hits = index.search(hash_provider.embed_text(target.text), k=1)
    assert hits[0].passage_id == "p2"
    assert abs(hits[0].score - 1.0) < 1e-6


def test_scores_monotonic(hash_provider):
    store = _random_store(100, seed=1)
    index = build_index(store, hash_provider)
    hits = index.search(hash_provider.embed_text("w1 w2 w3"), k=20)
    for a, b in zip(hits, hits[1:]):
        assert a.score >= b.score


def test_exact_matches_linear_scan_oracle(hash_provider):
    store = _random_store(300, seed=2)
    index = build_index(store, hash_provider)
    rng = np.random.default_rng(9)
    for _ in range(25):
        words = " ".join(f"w{rng.integers(0, 5000)}" for _ in range(5))
        q = hash_provider.embed_text(words)
        hits = index.search(q, k=10)
        assert [(h.passage_id, h.score) for h in hits] == brute_force_search(index, q, 10)


def test_tie_break_ascending_id(hash_provider):
    # identical texts embed identically, so scores tie exactly
    store = make_store(
        [("z-last", "T", "same words here"), ("a-first", "T", "same words here"),
         ("m-mid", "T", "same words here"), ("other", "T", "different thing entirely")]
    )
    index = build_index(store, hash_provider)
    hits = index.search(hash_provider.embed_text("same words here"), k=3)
    assert [h.passage_id for h in hits] == ["a-first", "m-mid", "z-last"]


def test_query_dim_mismatch(tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    with pytest.raises(IndexError_):
        index.search(np.zeros(7, dtype=np.float32), k=1)


def test_ivf_search_structure(hash_provider):
    store = _random_store(500, seed=4)
    index = build_index(store, hash_provider, variant="ivf", num_clusters=16, num_probes=4, seed=0)
    hits = index.search(hash_provider.embed_text("w10 w20 w30"), k=10)
    assert len(hits) == 10
    for a, b in zip(hits, hits[1:]):
        assert a.score >= b.score
    assert len({h.passage_id for h in hits}) == 10


def test_ivf_full_probe_equals_exact(hash_provider):
    store = _random_store(200, seed=6)
    exact = build_index(store, hash_provider)
    ivf = build_index(store, hash_provider, variant="ivf", num_clusters=8, num_probes=8, seed=0)
    q = hash_provider.embed_text("w1 w42 w999")
    assert [h.passage_id for h in ivf.search(q, 15)] == [h.passage_id for h in exact.search(q, 15)]


def test_save_load_round_trip(tmp_path, hash_provider):
    store = _random_store(120, seed=7)
    for variant, kwargs in (("exact", {}), ("ivf", {"num_clusters": 6, "num_probes": 3})):
        index = build_index(store, hash_provider, variant=variant, **kwargs)
        path = tmp_path / f"{variant}.bin"
        index.save(path)
        loaded = VectorIndex.load(path)
        assert loaded.variant == variant
        assert loaded.ids == index.ids
        q = hash_provider.embed_text("w5 w6 w7")
        assert [(h.passage_id, h.score) for h in loaded.search(q, 8)] == [
            (h.passage_id, h.score) for h in index.search(q, 8)
        ]


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(IndexError_, match="magic"):
        VectorIndex.load(path)


def test_load_rejects_bad_version(tmp_path, tiny_store, hash_provider):
    index = build_index(tiny_store, hash_provider)
    path = tmp_path / "idx.bin"
    index.save(path)
    raw = bytearray(path.read_bytes())
    raw[4] = 99  # version field
    path.write_bytes(bytes(raw))
    with pytest.raises(IndexError_, match="version"):
        VectorIndex.load(path)


def test_kmeans_repairs_empty_clusters():
    # a tight blob of 10 points plus 2 outliers forces empty clusters at k=4,
    # which the split-largest repair resolves
    rng = np.random.default_rng(0)
    blob = np.tile([1.0, 0.0], (10, 1)) + rng.normal(scale=0.01, size=(10, 2))
    x = np.vstack([blob, [[0.0, 1.0]], [[-1.0, 0.0]]])
    centroids, assignments = kmeans(x, 4, seed=0)
    assert centroids.shape == (4, 2)
    assert set(assignments.tolist()) == {0, 1, 2, 3}


def test_kmeans_k_bounds():
    x = np.random.default_rng(0).normal(size=(5, 3))
    with pytest.raises(IndexError_):
        kmeans(x, 6)
    with pytest.raises(IndexError_):
        kmeans(x, 0)


def test_build_10k_store_within_budget(hash_provider):
    store = _random_store(10_000, seed=8, tokens=8)
    start = time.perf_counter()
    index = build_index(store, hash_provider)
    elapsed = time.perf_counter() - start
    assert len(index) == 10_000
    assert elapsed < 10.0
