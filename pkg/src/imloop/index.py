"""Vector index over passage embeddings: exact top-k cosine search and an
inverted-file (k-means) approximate variant, with single-file persistence."""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import CorpusStore
from .embed import EmbeddingProvider

MAGIC = b"IMVX"
FORMAT_VERSION = 1

_VARIANT_EXACT = 0
_VARIANT_IVF = 1


class IndexError_(ValueError):
    """Bad index input, a corrupt file, or a dimension mismatch."""


@dataclass(frozen=True)
class SearchHit:
    passage_id: str
    score: float


class VectorIndex:
    """Immutable after build; searches are safe to run concurrently.

    Scores are cosine similarities; since every stored vector is unit-norm
    the score is a plain dot product. Ties are broken by ascending passage id
    so results are fully deterministic.
    """

    def __init__(
        self,
        ids: list[str],
        matrix: np.ndarray,
        variant: str = "exact",
        centroids: np.ndarray | None = None,
        assignments: np.ndarray | None = None,
        num_probes: int = 1,
    ):
        if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
            raise IndexError_("ids and matrix rows must align")
        if len(set(ids)) != len(ids):
            raise IndexError_("duplicate passage ids in index")
        self.ids = list(ids)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self.variant = variant
        self.num_probes = num_probes
        self.centroids = centroids
        self._members: list[np.ndarray] | None = None
        if variant == "ivf":
            if centroids is None or assignments is None:
                raise IndexError_("ivf variant requires centroids and assignments")
            self.assignments = np.asarray(assignments, dtype=np.int32)
            self._members = [
                np.flatnonzero(self.assignments == c) for c in range(centroids.shape[0])
            ]
        elif variant != "exact":
            raise IndexError_(f"unknown index variant {variant!r}")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def search(self, query: np.ndarray, k: int) -> list[SearchHit]:
        query = np.asarray(query, dtype=np.float32)
        if query.shape != (self.dim,):
            raise IndexError_(f"query dim {query.shape} does not match index dim ({self.dim},)")
        if k < 1:
            raise IndexError_("k must be >= 1")
        if self.variant == "exact":
            rows = np.arange(len(self.ids))
            scores = self.matrix @ query
        else:
            rows = self._probe_rows(query)
            scores = self.matrix[rows] @ query
        return self._top_k(rows, scores, k)

    def _probe_rows(self, query: np.ndarray) -> np.ndarray:
        assert self.centroids is not None and self._members is not None
        d2 = ((self.centroids - query) ** 2).sum(axis=1)
        probe = np.argsort(d2, kind="stable")[: self.num_probes]
        rows = [self._members[c] for c in probe if len(self._members[c])]
        if not rows:
            return np.arange(0)
        return np.concatenate(rows)

    def _top_k(self, rows: np.ndarray, scores: np.ndarray, k: int) -> list[SearchHit]:
        n = len(rows)
        if n == 0:
            return []
        k = min(k, n)
        if k < n:
            part = np.argpartition(-scores, k - 1)[:k]
            kth = scores[part].min()
            cand = np.flatnonzero(scores >= kth)  # keep boundary ties for exact ordering
        else:
            cand = np.arange(n)
        ordered = sorted(cand, key=lambda i: (-scores[i], self.ids[rows[i]]))[:k]
        return [SearchHit(self.ids[rows[i]], float(scores[i])) for i in ordered]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            variant = _VARIANT_EXACT if self.variant == "exact" else _VARIANT_IVF
            fh.write(MAGIC)
            fh.write(struct.pack("<HBII", FORMAT_VERSION, variant, self.dim, len(self.ids)))
            if self.variant == "ivf":
                assert self.centroids is not None
                fh.write(struct.pack("<II", self.centroids.shape[0], self.num_probes))
            fh.write(self.matrix.astype("<f4").tobytes())
            if self.variant == "ivf":
                fh.write(self.centroids.astype("<f4").tobytes())
                fh.write(self.assignments.astype("<i4").tobytes())
            for pid in self.ids:
                raw = pid.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        path = Path(path)
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise IndexError_(f"{path}: not an index file (bad magic)")
            version, variant, dim, count = struct.unpack("<HBII", fh.read(11))
            if version != FORMAT_VERSION:
                raise IndexError_(f"{path}: unsupported index version {version}")
            centroids = assignments = None
            num_probes = 1
            if variant == _VARIANT_IVF:
                num_clusters, num_probes = struct.unpack("<II", fh.read(8))
            matrix = np.frombuffer(fh.read(4 * count * dim), dtype="<f4").reshape(count, dim)
            if variant == _VARIANT_IVF:
                centroids = np.frombuffer(fh.read(4 * num_clusters * dim), dtype="<f4").reshape(
                    num_clusters, dim
                )
                assignments = np.frombuffer(fh.read(4 * count), dtype="<i4")
            ids = []
            for _ in range(count):
                (length,) = struct.unpack("<I", fh.read(4))
                ids.append(fh.read(length).decode("utf-8"))
        name = "exact" if variant == _VARIANT_EXACT else "ivf"
        return cls(ids, matrix.copy(), name, centroids, assignments, num_probes)


def build_index(
    store: CorpusStore,
    provider: EmbeddingProvider,
    variant: str = "exact",
    num_clusters: int = 64,
    num_probes: int = 16,
    seed: int = 0,
    workers: int = 1,
) -> VectorIndex:
    """Embed every passage and assemble the index. Deterministic for a fixed
    provider and seed; embedding may fan out over ``workers`` threads."""
    if len(store) == 0:
        raise IndexError_("cannot index an empty store")
    passages = store.passages
    texts = [p.text for p in passages]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(provider.embed_text, texts))
    else:
        vectors = provider.embed_texts(texts)
    matrix = np.stack(vectors).astype(np.float32)
    ids = [p.id for p in passages]
    if variant == "exact":
        return VectorIndex(ids, matrix)
    if variant == "ivf":
        num_clusters = min(num_clusters, len(ids))
        centroids, assignments = kmeans(matrix.astype(np.float64), num_clusters, seed=seed)
        return VectorIndex(ids, matrix, "ivf", centroids.astype(np.float32), assignments, num_probes)
    raise IndexError_(f"unknown index variant {variant!r}")


def kmeans(
    x: np.ndarray, k: int, seed: int = 0, max_iters: int = 25
) -> tuple[np.ndarray, np.ndarray]:
    """Plain k-means with k-means++ seeding and split-largest empty-cluster repair.

    Runs at most ``max_iters`` Lloyd iterations, stopping early when assignments
    stabilize. Fully deterministic for a fixed seed.
    """
    n = x.shape[0]
    if k < 1 or k > n:
        raise IndexError_(f"k={k} out of range for {n} points")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    assignments = _assign(x, centroids)
    for _ in range(max_iters):
        centroids = _update_centroids(x, assignments, centroids, k)
        new_assignments = _assign(x, centroids)
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return centroids, assignments.astype(np.int32)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
            continue
        centroids[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |x - c|^2 = |x|^2 - 2 x.c + |c|^2; |x|^2 is constant per point.
    scores = -2.0 * (x @ centroids.T) + (centroids**2).sum(axis=1)
    return scores.argmin(axis=1)


def _update_centroids(
    x: np.ndarray, assignments: np.ndarray, old: np.ndarray, k: int
) -> np.ndarray:
    centroids = old.copy()
    counts = np.bincount(assignments, minlength=k)
    for c in range(k):
        if counts[c] > 0:
            centroids[c] = x[assignments == c].mean(axis=0)
    for c in np.flatnonzero(counts == 0):
        big = int(counts.argmax())
        members = np.flatnonzero(assignments == big)
        far = members[((x[members] - centroids[big]) ** 2).sum(axis=1).argmax()]
        centroids[c] = x[far]
        assignments[far] = c
        counts[big] -= 1
        counts[c] += 1
    return centroids
