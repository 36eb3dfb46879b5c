"""Archive-quality measures.

Semantic recall/fidelity against a noun vocabulary in a joint embedding
space, visual and semantic diversity via greedy farthest-point sampling and
the k-covering radius, subtree-entropy tree balance over the publication
phylogeny, metric-over-archive-growth series, and per-weight sweep analysis
of a genome's representation.

All distances are cosine distances.  A zero-norm vector has similarity 0
to everything except another zero-norm vector (similarity 1), so blank
images behave sanely.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from random import Random

import numpy as np

from .archive import Archive, PhylogenyForest
from .cppn import Genome, ImageBuffer, distance_grayscale, render
from .providers import EmbeddingVector, stack_vectors

log = logging.getLogger(__name__)

DEFAULT_COVERAGE_K = 100


def load_nouns(path: str | Path | None = None) -> tuple[str, ...]:
    """The noun vocabulary, one per line; deduplicated case-insensitively."""
    if path is None:
        text = (resources.files("picbreeder.assets") / "things_nouns.txt"
                ).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    nouns: list[str] = []
    seen: set[str] = set()
    for line in text.splitlines():
        noun = line.strip()
        if noun and noun.casefold() not in seen:
            seen.add(noun.casefold())
            nouns.append(noun)
    if not nouns:
        raise ValueError("noun list is empty")
    return tuple(nouns)


# ----------------------------------------------------------------------
# Cosine geometry
# ----------------------------------------------------------------------

def _as_matrix(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        mat = np.asarray(points, dtype=np.float64)
    else:
        points = list(points)
        if points and isinstance(points[0], EmbeddingVector):
            mat = stack_vectors(points)
        else:
            mat = np.asarray(points, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError("expected a nonempty (n, d) point set")
    return mat


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarities with the zero-norm convention."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"embedding dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    a_zero = na == 0
    b_zero = nb == 0
    na = np.where(a_zero, 1.0, na)
    nb = np.where(b_zero, 1.0, nb)
    sims = (a / na[:, None]) @ (b / nb[:, None]).T
    if a_zero.any() or b_zero.any():
        sims[a_zero, :] = 0.0
        sims[:, b_zero] = 0.0
        sims[np.ix_(a_zero, b_zero)] = 1.0
    return np.clip(sims, -1.0, 1.0)


def semantic_recall(image_vectors, noun_vectors, aggregate: str = "mean") -> float:
    """How well the images cover the noun vocabulary.

    For each noun, take the best cosine similarity against any image.  The
    primary aggregate is the mean over nouns; `aggregate="sum-distance"`
    instead sums each noun's minimum cosine distance.
    """
    sims = cosine_similarity_matrix(noun_vectors, image_vectors)
    best = sims.max(axis=1)
    if aggregate == "mean":
        return float(best.mean())
    if aggregate == "sum-distance":
        return float((1.0 - best).sum())
    raise ValueError(f"unknown aggregate {aggregate!r}")


def semantic_fidelity(image_vectors, noun_vectors) -> float:
    """Mean over images of the best similarity to any noun.

    Gameable by duplicating one salient image, unlike recall.
    """
    sims = cosine_similarity_matrix(image_vectors, noun_vectors)
    return float(sims.max(axis=1).mean())


def farthest_point_sample(points, k: int, start: int | None = 0,
                          rng: Random | None = None) -> list[int]:
    """Greedy farthest-point sampling under cosine distance.

    Starts at `start` (or uniform random when None), then repeatedly adds
    the point with the greatest minimum distance to the chosen set.  Ties
    break toward the lowest index.
    """
    mat = _as_matrix(points)
    n = mat.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    if start is None:
        if rng is None:
            raise ValueError("random start requires an rng")
        start = rng.randrange(n)
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range")

    sims = cosine_similarity_matrix(mat, mat)
    dists = 1.0 - sims
    chosen = [start]
    min_dist = dists[start].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(min_dist))   # argmax takes the lowest index on ties
        chosen.append(nxt)
        np.minimum(min_dist, dists[nxt], out=min_dist)
    return chosen


def k_covering_radius(points, representative_indices) -> float:
    """Smallest radius at which balls around the representatives cover
    every point: max over points of min cosine distance to a representative."""
    mat = _as_matrix(points)
    reps = list(representative_indices)
    if not reps:
        raise ValueError("no representatives")
    sims = cosine_similarity_matrix(mat[reps], mat)
    return float((1.0 - sims).min(axis=0).max())


# ----------------------------------------------------------------------
# Archive embedding/caption store
# ----------------------------------------------------------------------

def _cache_tag(provider) -> str:
    tag = getattr(provider, "model", type(provider).__name__)
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(tag))


class ArchiveEmbeddings:
    """Lazy per-entry embeddings and captions for one archive.

    Image/caption embeddings are memoized in RAM; captions are also cached
    on disk next to the archive (keyed by entry id) so interrupted or
    repeated runs never re-bill a captioning provider.
    """

    def __init__(self, archive: Archive, image_embedder=None, captioner=None,
                 text_embedder=None):
        self.archive = archive
        self.image_embedder = image_embedder
        self.captioner = captioner
        self.text_embedder = text_embedder
        self._image_vecs: dict[int, EmbeddingVector] = {}
        self._captions: dict[int, str] = {}
        self._caption_vecs: dict[int, EmbeddingVector] = {}
        self._caption_cache_path: Path | None = None
        if captioner is not None and archive.dir is not None:
            self._caption_cache_path = (
                archive.dir / f"captions_{_cache_tag(captioner)}.json")
            if self._caption_cache_path.exists():
                loaded = json.loads(self._caption_cache_path.read_text())
                self._captions = {int(k): v for k, v in loaded.items()}

    def _save_captions(self) -> None:
        if self._caption_cache_path is not None:
            self._caption_cache_path.write_text(json.dumps(
                {str(k): v for k, v in sorted(self._captions.items())}, indent=0))

    def image_vectors(self, upto: int | None = None) -> np.ndarray:
        n = len(self.archive) if upto is None else upto
        for i in range(n):
            if i not in self._image_vecs:
                self._image_vecs[i] = self.image_embedder.embed_image(
                    self.archive.png_bytes(i))
        return stack_vectors([self._image_vecs[i] for i in range(n)])

    def caption(self, entry_id: int) -> str:
        if entry_id not in self._captions:
            try:
                self._captions[entry_id] = self.captioner.caption(
                    self.archive.png_bytes(entry_id))
            except Exception:
                self._save_captions()   # keep the partial cache
                raise
            self._save_captions()
        return self._captions[entry_id]

    def caption_vectors(self, upto: int | None = None) -> np.ndarray:
        n = len(self.archive) if upto is None else upto
        for i in range(n):
            if i not in self._caption_vecs:
                self._caption_vecs[i] = self.text_embedder.embed_text(
                    self.caption(i))
        return stack_vectors([self._caption_vecs[i] for i in range(n)])


def _coverage(vectors: np.ndarray, k: int, start: int | None,
              rng: Random | None) -> float:
    n = vectors.shape[0]
    if n < k:
        log.warning("archive size %d below k=%d; using k=%d", n, k, n)
        k = n
    reps = farthest_point_sample(vectors, k, start=start, rng=rng)
    return k_covering_radius(vectors, reps)


def visual_coverage(archive: Archive, image_embedder, k: int = DEFAULT_COVERAGE_K,
                    upto: int | None = None, start: int | None = 0,
                    rng: Random | None = None,
                    store: ArchiveEmbeddings | None = None) -> float:
    """k-covering radius over image embeddings of the archive."""
    store = store or ArchiveEmbeddings(archive, image_embedder=image_embedder)
    return _coverage(store.image_vectors(upto), k, start, rng)


def semantic_coverage(archive: Archive, captioner, text_embedder,
                      k: int = DEFAULT_COVERAGE_K, upto: int | None = None,
                      start: int | None = 0, rng: Random | None = None,
                      store: ArchiveEmbeddings | None = None) -> float:
    """k-covering radius over embeddings of one-sentence image captions."""
    store = store or ArchiveEmbeddings(archive, captioner=captioner,
                                       text_embedder=text_embedder)
    return _coverage(store.caption_vectors(upto), k, start, rng)


def archive_semantic_recall(archive: Archive, image_embedder, noun_vectors,
                            upto: int | None = None,
                            store: ArchiveEmbeddings | None = None,
                            aggregate: str = "mean") -> float:
    store = store or ArchiveEmbeddings(archive, image_embedder=image_embedder)
    return semantic_recall(store.image_vectors(upto), noun_vectors, aggregate)


def archive_semantic_fidelity(archive: Archive, image_embedder, noun_vectors,
                              upto: int | None = None,
                              store: ArchiveEmbeddings | None = None) -> float:
    store = store or ArchiveEmbeddings(archive, image_embedder=image_embedder)
    return semantic_fidelity(store.image_vectors(upto), noun_vectors)


# ----------------------------------------------------------------------
# Tree balance
# ----------------------------------------------------------------------

def j1_index(forest: PhylogenyForest) -> float:
    """Subtree-entropy tree balance in [0, 1].

    Every publication is a node of weight 1.  Each internal node with at
    least two children contributes the Shannon entropy (log base equal to
    its child count) of its children's subtree-weight distribution,
    weighted by its own subtree weight; the index is the weighted mean of
    those contributions.  Forests are joined under a virtual super-root
    that is excluded from scoring; a forest with no multi-child node
    (e.g. a pure chain) scores 0.
    """
    n = len(forest)
    if n == 0:
        raise ValueError("empty forest")
    children = forest.children
    sizes = [1] * n
    for node in range(n - 1, -1, -1):   # parents precede children by id
        for child in children[node]:
            sizes[node] += sizes[child]

    weighted = 0.0
    total = 0.0
    for node in range(n):
        kids = children[node]
        if len(kids) < 2:
            continue
        kid_sizes = np.array([sizes[c] for c in kids], dtype=np.float64)
        p = kid_sizes / kid_sizes.sum()
        entropy = float(-(p * np.log(p)).sum() / math.log(len(kids)))
        weighted += sizes[node] * entropy
        total += sizes[node]
    if total == 0.0:
        return 0.0
    return weighted / total


# ----------------------------------------------------------------------
# Series over archive growth
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class MetricSeries:
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        sizes = [s for s, _ in self.points]
        if sizes != sorted(set(sizes)):
            raise ValueError("archive sizes must be strictly increasing")

    def final(self) -> float:
        return self.points[-1][1]

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["archive_size", "value"])
            writer.writerows(self.points)


def series(archive: Archive, metric_fn, step: int) -> MetricSeries:
    """Evaluate metric_fn(archive, upto) on prefixes of size step, 2*step,
    ... and always on the full archive."""
    if step < 1:
        raise ValueError("step must be >= 1")
    n = len(archive)
    sizes = list(range(step, n + 1, step))
    if not sizes or sizes[-1] != n:
        sizes.append(n)
    return MetricSeries(tuple((s, float(metric_fn(archive, s))) for s in sizes))


# ----------------------------------------------------------------------
# Weight sweeps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepEntry:
    innovation: int
    deltas: tuple[float, ...]
    distances: tuple[float, ...]
    images: tuple[ImageBuffer, ...]

    def extreme_distance(self) -> float:
        return max(self.distances[0], self.distances[-1])


@dataclass(frozen=True)
class SweepResult:
    entries: tuple[SweepEntry, ...]

    def ranked(self) -> tuple[SweepEntry, ...]:
        return tuple(sorted(self.entries,
                            key=lambda e: (-e.extreme_distance(), e.innovation)))

    def to_json(self) -> str:
        ranked = self.ranked()
        return json.dumps({
            "ranking": [e.innovation for e in ranked],
            "sweeps": [{
                "innovation": e.innovation,
                "deltas": list(e.deltas),
                "distances": list(e.distances),
            } for e in ranked],
        }, indent=2)


def weight_sweep(genome: Genome, n_steps: int, width: int, height: int) -> SweepResult:
    """Perturb each enabled connection weight across [-1, 1] and measure the
    grayscale pixel distance to the original render at every step."""
    if n_steps < 3 or n_steps % 2 == 0:
        raise ValueError("n_steps must be an odd integer >= 3 so delta 0 is on the grid")
    deltas = tuple(np.linspace(-1.0, 1.0, n_steps))
    original = render(genome, width, height, color_mode=False)

    entries = []
    for idx, conn in enumerate(genome.connections):
        if not conn.enabled:
            continue
        images = []
        distances = []
        for delta in deltas:
            if delta == 0.0:
                buf = original
            else:
                perturbed = list(genome.connections)
                perturbed[idx] = type(conn)(conn.innovation, conn.src, conn.dst,
                                            conn.weight + delta, conn.enabled,
                                            conn.subnet)
                buf = render(Genome(genome.nodes, tuple(perturbed)),
                             width, height, color_mode=False)
            images.append(buf)
            distances.append(distance_grayscale(original, buf))
        entries.append(SweepEntry(conn.innovation, deltas, tuple(distances),
                                  tuple(images)))
    return SweepResult(tuple(entries))
