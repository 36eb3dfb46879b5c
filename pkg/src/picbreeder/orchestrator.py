"""Experiment runner, persistence, and human-lineage ingestion.

Every session branches from the archive of publications completed at its
start.  Provider-free agents execute strictly in session order (threads buy
nothing for pure CPU work), which makes the whole run a pure function of
the config seed.  Chat-backed agents run in concurrent rounds of
`parallel_agents` to hide provider latency; each round branches from the
archive at the round boundary (providers are nondeterministic anyway).

Runs are resumable: the archive event log plus the innovation-registry log
fully reconstruct the run state at the last published session.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import os
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from random import Random

from . import cppn, metrics
from .agents import (
    Agent,
    ChatAgent,
    AgentSpec,
    EpsilonGreedyAgent,
    RandomAgent,
    TraitPool,
    assign_personality,
    random_select,
)
from .archive import Archive, rating_due, ScoreRangeError
from .neat import InnovationRegistry, ParameterError
from .providers import HttpChatProvider
from .session import (
    SessionConfig,
    SessionStateError,
    apply_action,
    finalize_publish,
    start_branch,
    start_fresh,
)

log = logging.getLogger(__name__)

ENV_CHAT_API_KEY = "PICBREEDER_CHAT_API_KEY"


class ConfigError(ValueError):
    pass


class IngestError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    sessions: int = 2000
    parallel_agents: int = 10
    seed: int = 0
    agent: str = "random"                # random | chat
    epsilon: float = 0.0
    context_length: int | str = 1
    na: int = 0                          # active personality traits
    model: str = ""
    pop_size: int = 15
    generations: int = 20
    width: int = 128
    height: int = 128
    fixed_session_length: bool = True
    save_images: bool = True
    out_dir: str = ""                    # empty: in-memory archive
    traits_file: str = ""
    chat_endpoint: str = ""

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ExperimentConfig":
        """Parse a flat `key = value` config document."""
        values: dict = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value, fields[key].type)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _coerce(key: str, value: str, annotation: str):
    if key == "context_length":
        return value if value == "full" else int(value)
    if annotation == "bool":
        if value.lower() in ("true", "1", "yes", "on"):
            return True
        if value.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if annotation == "int":
        return int(value)
    if annotation == "float":
        return float(value)
    return value


def derive_rng(root_seed: int, agent_id: str, session_counter: int) -> Random:
    """Per-session random stream; immune to parallel scheduling order."""
    digest = hashlib.sha256(
        f"{root_seed}:{agent_id}:{session_counter}".encode()).digest()
    return Random(int.from_bytes(digest[:8], "big"))


# ----------------------------------------------------------------------
# The experiment loop
# ----------------------------------------------------------------------

class _Runner:
    def __init__(self, config: ExperimentConfig, chat_provider=None):
        self.config = config
        self.session_config = SessionConfig(
            generations_to_publish=config.generations, pop_size=config.pop_size,
            width=config.width, height=config.height,
            fixed_length=config.fixed_session_length)
        out_dir = Path(config.out_dir) if config.out_dir else None
        if out_dir is not None and (out_dir / "meta.json").exists():
            self.archive = Archive.open(out_dir)
            self.archive.save_images = config.save_images
        else:
            self.archive = Archive(out_dir, width=config.width,
                                   height=config.height,
                                   save_images=config.save_images)
        self.registry = InnovationRegistry()
        self._innov_path = (out_dir / "innovations.jsonl") if out_dir else None
        if self._innov_path is not None and self._innov_path.exists():
            with open(self._innov_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self.registry.replay_event(json.loads(line))

        self._flush_lock = threading.Lock()
        self.provider = chat_provider
        if config.agent == "chat" and self.provider is None:
            if not config.chat_endpoint:
                raise ConfigError("chat agent requires chat_endpoint or an "
                                  "injected provider")
            self.provider = HttpChatProvider(
                config.chat_endpoint,
                api_key=os.environ.get(ENV_CHAT_API_KEY, ""),
                model=config.model)

        self.pool = TraitPool(())
        if config.na > 0:
            if not config.traits_file:
                raise ConfigError("na > 0 requires traits_file")
            self.pool = TraitPool.load(config.traits_file)
            self.pool.activate(config.na, derive_rng(config.seed, "traits", 0))

    def _flush_registry(self) -> None:
        with self._flush_lock:
            events = self.registry.drain_events()
            if not events or self._innov_path is None:
                return
            with open(self._innov_path, "a", encoding="utf-8") as fh:
                for event in events:
                    fh.write(json.dumps(event) + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def _make_agent(self, session_index: int) -> Agent:
        config = self.config
        if config.agent == "chat":
            spec = AgentSpec(kind="chat", epsilon=config.epsilon,
                             context_length=config.context_length,
                             model=config.model)
            base: Agent = ChatAgent(self.provider, spec,
                                    name=f"chat-{session_index % config.parallel_agents}")
        elif config.agent == "random":
            base = RandomAgent()
        else:
            raise ConfigError(f"unknown agent kind {config.agent!r}")
        if config.epsilon > 0.0:
            return EpsilonGreedyAgent(base, config.epsilon)
        return base

    def _make_rater(self, session_index: int) -> Agent:
        # Raters are always fresh-context instances.
        return self._make_agent(session_index)

    def _run_session(self, session_index: int, snapshot_size: int) -> int:
        config = self.config
        agent_id = f"agent-{session_index % config.parallel_agents}"
        rng = derive_rng(config.seed, agent_id, session_index)
        personality = assign_personality(self.pool, rng)
        agent = self._make_agent(session_index)
        agent.begin_session(session_index, personality)

        if snapshot_size == 0:
            sample, choice, rationale = None, None, ""
        else:
            sample = self.archive.sample_for_branching(rng, upto=snapshot_size)
            choice, rationale = agent.decide_branch(sample, self.archive, rng)

        if choice is None or choice.fresh:
            state = start_fresh(self.session_config, rng)
        else:
            parent = self.archive.entry(choice.entry_id)
            self.archive.record_branch(parent.id, agent_id)
            state = start_branch(parent.genome, parent.id, parent.color_mode,
                                 self.session_config, self.registry, rng)
        state.transcript.insert(0, {
            "event": "branch",
            "ts": time.time(),
            "sample": list(sample.all_ids()) if sample else [],
            "choice": None if choice is None or choice.fresh else choice.entry_id,
            "personality": personality,
            "rationale": rationale,
        })

        while state.generation < config.generations:
            action, why = agent.decide_select(state, rng)
            try:
                apply_action(state, action, self.registry, rng, why)
            except (SessionStateError, ParameterError) as err:
                log.warning("%s session %d: illegal action %r (%s); using a "
                            "random selection", agent_id, session_index, action, err)
                fallback = random_select(state, rng)
                apply_action(state, fallback, self.registry, rng, "")

        publish, why = agent.decide_publish(state, rng)
        record = finalize_publish(state, publish.index, publish.title, why)
        self._flush_registry()
        entry_id = self.archive.publish(record, agent_id, why)
        self.archive.save_transcript(agent_id, session_index, state.transcript)

        if rating_due(entry_id + 1, len(self.archive)):
            self._run_rating_round(session_index, rng)
        return entry_id

    def _run_rating_round(self, session_index: int, rng: Random) -> None:
        rater_id = f"rater-{session_index % self.config.parallel_agents}"
        sample = self.archive.sample_for_branching(rng)
        rater = self._make_rater(session_index)
        rater.begin_session(session_index)
        scores, _ = rater.decide_ratings(sample.all_ids(), self.archive, rng)
        try:
            self.archive.apply_ratings(scores, rater_id)
        except ScoreRangeError as err:
            log.warning("rating round dropped scores: %s", err)

    def run(self, progress=None) -> Archive:
        config = self.config
        pool_size = config.parallel_agents
        threaded = config.agent == "chat" and pool_size > 1
        completed = len(self.archive)
        while completed < config.sessions:
            if threaded:
                round_start = (completed // pool_size) * pool_size
                todo = [s for s in range(round_start,
                                         min(round_start + pool_size,
                                             config.sessions))
                        if s >= completed]
                with ThreadPoolExecutor(max_workers=pool_size) as pool:
                    list(pool.map(lambda s: self._run_session(s, round_start),
                                  todo))
            else:
                self._run_session(completed, completed)
            completed = len(self.archive)
            self._flush_registry()
            if progress is not None and completed % 50 == 0:
                progress(completed, config.sessions)
        return self.archive


def run_experiment(config: ExperimentConfig, chat_provider=None,
                   progress=None) -> Archive:
    """Run (or resume) an experiment until `config.sessions` publications."""
    return _Runner(config, chat_provider).run(progress)


# ----------------------------------------------------------------------
# Human-lineage ingestion
# ----------------------------------------------------------------------

def ingest_human_lineages(src: str | Path, out_dir: str | Path) -> Archive:
    """Normalize externally collected lineage records into an archive.

    `src` is a JSONL file (or a directory containing lineages.jsonl) whose
    records carry: id, parent_id (optional), order (strictly increasing),
    and optional image/genome file references plus title and color fields.
    The result is a read-only archive over which every metric runs.
    """
    src = Path(src)
    if src.is_dir():
        src_file = src / "lineages.jsonl"
    else:
        src_file, src = src, src.parent
    if not src_file.exists():
        raise IngestError(f"no lineage file at {src_file}")

    archive = Archive(out_dir)
    if len(archive) > 0:
        raise IngestError(f"output archive {out_dir} is not empty")
    id_map: dict = {}
    last_order = None
    missing_genomes = 0
    for lineno, raw in enumerate(src_file.read_text().splitlines(), 1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as err:
            raise IngestError(f"{src_file}:{lineno}: bad JSON ({err})") from None
        for key in ("id", "order"):
            if key not in rec:
                raise IngestError(f"{src_file}:{lineno}: missing field {key!r}")
        if rec["id"] in id_map:
            raise IngestError(f"{src_file}:{lineno}: duplicate id {rec['id']}")
        if last_order is not None and rec["order"] <= last_order:
            raise IngestError(
                f"{src_file}:{lineno}: order {rec['order']} not increasing")
        last_order = rec["order"]
        parent = rec.get("parent_id")
        if parent is not None and parent not in id_map:
            raise IngestError(
                f"{src_file}:{lineno}: parent {parent} not published earlier")

        new_id = len(archive.entries)
        id_map[rec["id"]] = new_id
        genome = None
        if rec.get("genome"):
            genome = cppn.parse_genome((src / rec["genome"]).read_text())
        else:
            missing_genomes += 1
        archive.entries.append(_ingested_entry(
            new_id, rec, genome,
            None if parent is None else id_map[parent]))
        archive._append({
            "event": "publish", "id": new_id,
            "title": rec.get("title", f"entry-{rec['id']}"),
            "color_mode": bool(rec.get("color", True)),
            "parent_id": None if parent is None else id_map[parent],
            "agent_id": rec.get("agent_id", "human"),
            "rationale": "",
        })
        if genome is not None:
            (archive.dir / "genomes" / f"{new_id}.cppn").write_text(
                cppn.serialize_genome(genome))
        if rec.get("image"):
            shutil.copyfile(src / rec["image"],
                            archive.dir / "images" / f"{new_id}.png")
    if len(archive) == 0:
        raise IngestError(f"{src_file}: no records")
    if missing_genomes:
        log.warning("%d/%d ingested entries lack genomes; weight sweeps are "
                    "unavailable for them", missing_genomes, len(archive))
    archive.close()
    return Archive.open(archive.dir, readonly=True)


def _ingested_entry(new_id, rec, genome, parent_id):
    from .archive import ArchiveEntry

    return ArchiveEntry(
        id=new_id, genome=genome, title=rec.get("title", f"entry-{rec['id']}"),
        color_mode=bool(rec.get("color", True)), parent_id=parent_id,
        agent_id=rec.get("agent_id", "human"))


# ----------------------------------------------------------------------
# Grid exports
# ----------------------------------------------------------------------

GRID_KINDS = ("publication-order", "fps-representatives", "top-recall")


def export_grids(archive: Archive, kind: str, n: int, out_path: str | Path,
                 image_embedder=None, noun_vectors=None, start: int = 0,
                 tile: int = 64) -> Path:
    """Deterministic square montage of archive images."""
    import io

    import numpy as np
    from PIL import Image

    if len(archive) == 0:
        raise ValueError("archive is empty")
    n = min(n, len(archive))

    if kind == "publication-order":
        ids = list(range(n))
    elif kind == "fps-representatives":
        store = metrics.ArchiveEmbeddings(archive, image_embedder=image_embedder)
        vectors = store.image_vectors()
        ids = metrics.farthest_point_sample(vectors, n, start=start)
    elif kind == "top-recall":
        if noun_vectors is None:
            raise ValueError("top-recall grids need noun vectors")
        store = metrics.ArchiveEmbeddings(archive, image_embedder=image_embedder)
        sims = metrics.cosine_similarity_matrix(noun_vectors, store.image_vectors())
        best_image = sims.argmax(axis=1)
        order = np.argsort(-sims.max(axis=1))
        ids = []
        for noun_idx in order:
            image_id = int(best_image[noun_idx])
            if image_id not in ids:
                ids.append(image_id)
            if len(ids) == n:
                break
    else:
        raise ValueError(f"unknown grid kind {kind!r}; one of {GRID_KINDS}")

    cols = math.ceil(math.sqrt(len(ids)))
    rows = math.ceil(len(ids) / cols)
    sheet = Image.new("RGB", (cols * tile, rows * tile), (24, 24, 24))
    for pos, entry_id in enumerate(ids):
        img = Image.open(io.BytesIO(archive.png_bytes(entry_id)))
        img = img.resize((tile, tile), Image.NEAREST)
        sheet.paste(img, ((pos % cols) * tile, (pos // cols) * tile))
    out_path = Path(out_path)
    sheet.save(out_path, format="PNG")
    return out_path
