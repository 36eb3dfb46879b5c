"""The shared archive of published images.

Append-only event log (publications, branch events, ratings) with sidecar
genome files and PNG renders, so archives are durable, diffable, and
resumable.  All mutation goes through one lock; readers get consistent
snapshots.  An archive can also live purely in memory for fast experiments.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import os
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from random import Random

from . import cppn
from .cppn import Genome
from .session import PublicationRecord

SAMPLE_CATEGORY_SIZE = 20
SAMPLE_FULL_SIZE = 100
RATING_MIN_ARCHIVE = 100
RATING_EVERY = 5


class EmptyArchiveError(RuntimeError):
    pass


class IntegrityError(RuntimeError):
    pass


class ScoreRangeError(ValueError):
    """Some scores were rejected; the valid ones were still applied."""

    def __init__(self, rejected: dict[int, int]):
        super().__init__(f"rejected out-of-range or unknown ratings: {rejected}")
        self.rejected = rejected


@dataclass
class ArchiveEntry:
    id: int
    genome: Genome | None
    title: str
    color_mode: bool
    parent_id: int | None
    agent_id: str
    rationale: str = ""
    ratings: list[int] = field(default_factory=list)
    branch_count: int = 0

    def rating_key(self) -> tuple:
        """Sort key: rated beats unrated, then mean, then recency."""
        if not self.ratings:
            return (0, 0.0, self.id)
        return (1, sum(self.ratings) / len(self.ratings), self.id)


@dataclass(frozen=True)
class ArchiveSample:
    top_rated: tuple[int, ...]
    best_new: tuple[int, ...]
    most_branched: tuple[int, ...]
    latest: tuple[int, ...]
    random: tuple[int, ...]

    def categories(self) -> dict[str, tuple[int, ...]]:
        return {
            "top_rated": self.top_rated,
            "best_new": self.best_new,
            "most_branched": self.most_branched,
            "latest": self.latest,
            "random": self.random,
        }

    def all_ids(self) -> tuple[int, ...]:
        return (self.top_rated + self.best_new + self.most_branched
                + self.latest + self.random)


@dataclass(frozen=True)
class PhylogenyForest:
    """Rooted forest over entry ids; roots are fresh-origin publications."""

    parent_ids: tuple[int | None, ...]

    @cached_property
    def roots(self) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parent_ids) if p is None)

    @cached_property
    def children(self) -> dict[int, tuple[int, ...]]:
        kids: dict[int, list[int]] = {i: [] for i in range(len(self.parent_ids))}
        for i, p in enumerate(self.parent_ids):
            if p is not None:
                kids[p].append(i)
        return {i: tuple(c) for i, c in kids.items()}

    def __len__(self) -> int:
        return len(self.parent_ids)


def rating_due(publication_count: int, archive_size: int) -> bool:
    """A rating round runs after every 5th publication once the archive
    holds at least 100 images."""
    return archive_size >= RATING_MIN_ARCHIVE and publication_count % RATING_EVERY == 0


def _sample_quotas(n: int) -> list[int]:
    """Five near-equal category quotas partitioning min(n, 100) entries."""
    if n >= SAMPLE_FULL_SIZE:
        return [SAMPLE_CATEGORY_SIZE] * 5
    base, extra = divmod(n, 5)
    return [base + (1 if i < extra else 0) for i in range(5)]


class Archive:
    """Shared publication store; safe for concurrent sessions."""

    def __init__(self, directory: str | Path | None = None, *,
                 width: int = 128, height: int = 128,
                 save_images: bool = True, readonly: bool = False):
        self.dir = Path(directory) if directory is not None else None
        self.width = width
        self.height = height
        self.save_images = save_images
        self.readonly = readonly
        self.entries: list[ArchiveEntry] = []
        self._lock = threading.RLock()
        self._log = None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / "genomes").mkdir(exist_ok=True)
            (self.dir / "images").mkdir(exist_ok=True)
            meta = self.dir / "meta.json"
            if not meta.exists():
                meta.write_text(json.dumps(
                    {"width": width, "height": height}) + "\n")
            self._log = open(self.dir / "entries.jsonl", "a", encoding="utf-8")

    @classmethod
    def open(cls, directory: str | Path, readonly: bool = False) -> "Archive":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        archive = cls(directory, width=meta["width"], height=meta["height"],
                      readonly=readonly)
        log_path = directory / "entries.jsonl"
        if log_path.exists():
            with open(log_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        archive._replay(json.loads(line))
        return archive

    # -- event log ------------------------------------------------------

    def _append(self, event: dict) -> None:
        if self._log is None:
            return
        self._log.write(json.dumps(event) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    def _replay(self, event: dict) -> None:
        kind = event["event"]
        if kind == "publish":
            genome = None
            if self.dir is not None:
                path = self.dir / "genomes" / f"{event['id']}.cppn"
                if path.exists():
                    genome = cppn.parse_genome(path.read_text())
            self.entries.append(ArchiveEntry(
                id=event["id"], genome=genome, title=event["title"],
                color_mode=event["color_mode"], parent_id=event["parent_id"],
                agent_id=event["agent_id"], rationale=event.get("rationale", "")))
        elif kind == "branch":
            self.entries[event["id"]].branch_count += 1
        elif kind == "ratings":
            for key, score in event["scores"].items():
                self.entries[int(key)].ratings.append(score)
        else:
            raise IntegrityError(f"unknown archive event {kind!r}")

    # -- mutation -------------------------------------------------------

    def _check_writable(self) -> None:
        if self.readonly:
            raise IntegrityError("archive is read-only")

    def publish(self, record: PublicationRecord, agent_id: str,
                rationale: str = "") -> int:
        """Append the publication and return its id (durable before return)."""
        self._check_writable()
        with self._lock:
            entry_id = len(self.entries)
            if self.dir is not None:
                genome_path = self.dir / "genomes" / f"{entry_id}.cppn"
                genome_path.write_text(cppn.serialize_genome(record.genome))
                if self.save_images:
                    cppn.write_png(record.image,
                                   self.dir / "images" / f"{entry_id}.png")
            self.entries.append(ArchiveEntry(
                id=entry_id, genome=record.genome, title=record.title,
                color_mode=record.color_mode, parent_id=record.parent_id,
                agent_id=agent_id, rationale=rationale))
            self._append({"event": "publish", "id": entry_id,
                          "title": record.title, "color_mode": record.color_mode,
                          "parent_id": record.parent_id, "agent_id": agent_id,
                          "rationale": rationale})
            return entry_id

    def record_branch(self, parent_id: int, agent_id: str = "") -> None:
        self._check_writable()
        with self._lock:
            self.entries[parent_id].branch_count += 1
            self._append({"event": "branch", "id": parent_id,
                          "agent_id": agent_id})

    def apply_ratings(self, scores: dict[int, int], rater_agent_id: str) -> None:
        """Append each in-range score; out-of-range ones are rejected but do
        not block the others."""
        self._check_writable()
        with self._lock:
            applied: dict[int, int] = {}
            rejected: dict[int, int] = {}
            for entry_id, score in scores.items():
                ok = (isinstance(score, int) and 1 <= score <= 5
                      and 0 <= entry_id < len(self.entries))
                if ok:
                    self.entries[entry_id].ratings.append(score)
                    applied[entry_id] = score
                else:
                    rejected[entry_id] = score
            if applied:
                self._append({"event": "ratings",
                              "scores": {str(k): v for k, v in applied.items()},
                              "rater": rater_agent_id})
        if rejected:
            raise ScoreRangeError(rejected)

    # -- reads ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, entry_id: int) -> ArchiveEntry:
        return self.entries[entry_id]

    def sample_for_branching(self, rng: Random, upto: int | None = None) -> ArchiveSample:
        """The five-category, mutually exclusive branching sample.

        At archive size >= 100 each category holds exactly 20 ids and the
        categories are filled in order (top rated, best new, most branched,
        latest, random).  Smaller archives are partitioned whole into five
        near-equal categories by the same rules.
        """
        with self._lock:
            n = len(self.entries) if upto is None else min(upto, len(self.entries))
            if n == 0:
                raise EmptyArchiveError("archive holds no publications yet")
            pool = self.entries[:n]
            quotas = _sample_quotas(n)
            taken: set[int] = set()

            def grab(candidates, quota, key):
                chosen = heapq.nlargest(quota, candidates, key=key)
                taken.update(e.id for e in chosen)
                return tuple(e.id for e in chosen)

            top_rated = grab(pool, quotas[0], ArchiveEntry.rating_key)
            recent_pool = [e for e in pool[max(0, n - 100):] if e.id not in taken]
            best_new = grab(recent_pool, quotas[1], ArchiveEntry.rating_key)
            rest = [e for e in pool if e.id not in taken]
            most_branched = grab(rest, quotas[2],
                                 lambda e: (e.branch_count, e.id))
            rest = [e for e in pool if e.id not in taken]
            latest = grab(rest, quotas[3], lambda e: e.id)
            remainder = [e.id for e in pool if e.id not in taken]
            random_ids = tuple(sorted(rng.sample(remainder, min(quotas[4], len(remainder)))))
            return ArchiveSample(top_rated, best_new, most_branched, latest,
                                 random_ids)

    def phylogeny(self, upto: int | None = None) -> PhylogenyForest:
        with self._lock:
            n = len(self.entries) if upto is None else min(upto, len(self.entries))
            parents = []
            for e in self.entries[:n]:
                if e.parent_id is not None and not 0 <= e.parent_id < e.id:
                    raise IntegrityError(
                        f"entry {e.id} references invalid parent {e.parent_id}")
                parents.append(e.parent_id)
            return PhylogenyForest(tuple(parents))

    def png_bytes(self, entry_id: int) -> bytes:
        """PNG for an entry, from disk when present, else rendered on demand."""
        if self.dir is not None:
            path = self.dir / "images" / f"{entry_id}.png"
            if path.exists():
                return path.read_bytes()
        entry = self.entries[entry_id]
        if entry.genome is None:
            raise IntegrityError(f"entry {entry_id} has neither image nor genome")
        buf = cppn.render(entry.genome, self.width, self.height, entry.color_mode)
        return cppn.to_png_bytes(buf)

    def lineage(self, entry_id: int) -> list[int]:
        """Ancestor chain from the entry back to its fresh-origin root."""
        chain = [entry_id]
        while self.entries[chain[-1]].parent_id is not None:
            chain.append(self.entries[chain[-1]].parent_id)
        return chain

    def content_hash(self) -> str:
        """Digest of the full archive state, for determinism checks."""
        digest = hashlib.sha256()
        with self._lock:
            for e in self.entries:
                genome = cppn.genome_hash(e.genome) if e.genome else "-"
                line = (f"{e.id}|{e.parent_id}|{e.title}|{e.agent_id}|"
                        f"{int(e.color_mode)}|{genome}|"
                        f"{','.join(map(str, e.ratings))}|{e.branch_count}\n")
                digest.update(line.encode())
        return digest.hexdigest()

    def save_transcript(self, agent_id: str, session_index: int,
                        events: list[dict]) -> None:
        if self.dir is None:
            return
        tdir = self.dir / "transcripts"
        tdir.mkdir(exist_ok=True)
        path = tdir / f"{agent_id}__{session_index:06d}.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for event in events:
                fh.write(json.dumps(event) + "\n")

    def close(self) -> None:
        if self._log is not None:
            self._log.close()
            self._log = None
