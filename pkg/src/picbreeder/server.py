"""HTTP service exposing the archive and live sessions.

Human players travel exactly the same session/archive code paths as
synthetic agents, so a person can join (or seed) a running archive from a
browser.  Session-state violations map to 409 with a machine-readable
reason; bad parameters map to 400.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import uuid
from pathlib import Path
from random import Random

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import RedirectResponse, Response

from . import cppn, metrics
from .archive import Archive, ScoreRangeError
from .neat import InnovationRegistry, ParameterError
from .orchestrator import derive_rng
from .providers import DownsampleImageEmbedder
from .session import (
    Select,
    SessionConfig,
    SessionState,
    SessionStateError,
    ToggleColor,
    apply_action,
    finalize_publish,
    start_branch,
    start_fresh,
)


class _LiveSession:
    def __init__(self, sid: str, state: SessionState, rng: Random):
        self.sid = sid
        self.state = state
        self.rng = rng


def _session_view(live: _LiveSession) -> dict:
    state = live.state
    return {
        "sid": live.sid,
        "generation": state.generation,
        "generations_to_publish": state.config.generations_to_publish,
        "color_mode": state.color_mode,
        "strength": state.params.strength,
        "mode": state.params.mode,
        "published": state.published,
        "can_publish": state.can_publish(),
        "images": [f"/sessions/{live.sid}/images/{i}.png"
                   for i in range(len(state.population))],
    }


def create_app(archive: Archive, registry: InnovationRegistry,
               session_config: SessionConfig | None = None,
               seed: int = 0, innovations_path: str | Path | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="picbreeder")
    config = session_config or SessionConfig(width=archive.width,
                                             height=archive.height)
    sessions: dict[str, _LiveSession] = {}
    lock = threading.RLock()
    counter = itertools.count()
    sample_rng = derive_rng(seed, "server-sample", 0)

    def flush_registry() -> None:
        events = registry.drain_events()
        if not events or innovations_path is None:
            return
        with open(innovations_path, "a", encoding="utf-8") as fh:
            for event in events:
                fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def get_session(sid: str) -> _LiveSession:
        live = sessions.get(sid)
        if live is None:
            raise HTTPException(404, detail={"reason": "unknown_session"})
        return live

    def get_entry(entry_id: int):
        if not 0 <= entry_id < len(archive):
            raise HTTPException(404, detail={"reason": "unknown_entry"})
        return archive.entry(entry_id)

    @app.get("/archive/sample")
    def archive_sample():
        with lock:
            if len(archive) == 0:
                return {"size": 0, "categories": {
                    name: [] for name in ("top_rated", "best_new",
                                          "most_branched", "latest", "random")}}
            sample = archive.sample_for_branching(sample_rng)
        return {"size": len(archive),
                "categories": {k: list(v) for k, v in sample.categories().items()}}

    @app.get("/archive/entries/{entry_id}")
    def archive_entry(entry_id: int):
        entry = get_entry(entry_id)
        ratings = entry.ratings
        return {
            "id": entry.id, "title": entry.title, "agent_id": entry.agent_id,
            "color_mode": entry.color_mode, "parent_id": entry.parent_id,
            "branch_count": entry.branch_count,
            "rating_mean": sum(ratings) / len(ratings) if ratings else None,
            "rating_count": len(ratings),
            "image": f"/archive/entries/{entry.id}/image.png",
        }

    @app.get("/archive/entries/{entry_id}/image.png")
    def archive_image(entry_id: int):
        get_entry(entry_id)
        return Response(archive.png_bytes(entry_id), media_type="image/png")

    @app.get("/archive/entries/{entry_id}/lineage")
    def archive_lineage(entry_id: int):
        get_entry(entry_id)
        chain = archive.lineage(entry_id)
        return {"lineage": [
            {"id": i, "title": archive.entry(i).title,
             "image": f"/archive/entries/{i}/image.png"} for i in chain]}

    @app.post("/sessions")
    def create_session(payload: dict = Body(...)):
        origin = payload.get("origin", "fresh")
        sid = uuid.uuid4().hex[:12]
        rng = derive_rng(seed, f"human-{sid}", next(counter))
        with lock:
            if origin == "fresh":
                state = start_fresh(config, rng)
            elif isinstance(origin, dict) and "branch" in origin:
                entry = get_entry(int(origin["branch"]))
                archive.record_branch(entry.id, "human")
                state = start_branch(entry.genome, entry.id, entry.color_mode,
                                     config, registry, rng)
            else:
                raise HTTPException(400, detail={
                    "reason": "bad_origin",
                    "message": 'origin must be "fresh" or {"branch": id}'})
            live = _LiveSession(sid, state, rng)
            sessions[sid] = live
        return _session_view(live)

    @app.get("/sessions/{sid}")
    def session_state(sid: str):
        return _session_view(get_session(sid))

    @app.get("/sessions/{sid}/images/{index}.png")
    def session_image(sid: str, index: int):
        live = get_session(sid)
        if not 0 <= index < len(live.state.population):
            raise HTTPException(404, detail={"reason": "unknown_image"})
        buf = live.state.render(index)
        return Response(cppn.to_png_bytes(buf), media_type="image/png")

    @app.post("/sessions/{sid}/action")
    def session_action(sid: str, payload: dict = Body(...)):
        live = get_session(sid)
        kind = payload.get("type")
        if kind == "toggle_color":
            action = ToggleColor()
        elif kind == "select":
            indices = payload.get("indices")
            if not isinstance(indices, list) or not indices:
                raise HTTPException(400, detail={
                    "reason": "bad_selection",
                    "message": "select needs a nonempty indices list"})
            action = Select(tuple(int(i) for i in indices),
                            payload.get("strength"), payload.get("mode"))
        else:
            raise HTTPException(400, detail={
                "reason": "bad_action",
                "message": "type must be toggle_color or select"})
        with lock:
            try:
                apply_action(live.state, action, registry, live.rng,
                             payload.get("rationale", ""))
            except SessionStateError as err:
                raise HTTPException(409, detail={
                    "reason": "session_state", "message": str(err)})
            except (ParameterError, ValueError) as err:
                raise HTTPException(400, detail={
                    "reason": "bad_parameters", "message": str(err)})
        return _session_view(live)

    @app.post("/sessions/{sid}/publish")
    def session_publish(sid: str, payload: dict = Body(...)):
        live = get_session(sid)
        if "index" not in payload or "title" not in payload:
            raise HTTPException(400, detail={
                "reason": "bad_parameters",
                "message": "publish needs index and title"})
        with lock:
            try:
                record = finalize_publish(live.state, int(payload["index"]),
                                          str(payload["title"]),
                                          payload.get("rationale", ""))
            except SessionStateError as err:
                raise HTTPException(409, detail={
                    "reason": "session_state", "message": str(err)})
            except (ParameterError, ValueError) as err:
                raise HTTPException(400, detail={
                    "reason": "bad_parameters", "message": str(err)})
            flush_registry()
            entry_id = archive.publish(record, "human",
                                       payload.get("rationale", ""))
            archive.save_transcript("human", entry_id, live.state.transcript)
        return {"entry_id": entry_id,
                "image": f"/archive/entries/{entry_id}/image.png"}

    @app.post("/ratings")
    def post_ratings(payload: dict = Body(...)):
        scores = payload.get("scores")
        if not isinstance(scores, dict) or not scores:
            raise HTTPException(400, detail={
                "reason": "bad_parameters", "message": "scores map required"})
        try:
            parsed = {int(k): int(v) for k, v in scores.items()}
        except (TypeError, ValueError):
            raise HTTPException(400, detail={
                "reason": "bad_parameters", "message": "scores must map id to 1..5"})
        with lock:
            try:
                archive.apply_ratings(parsed, payload.get("rater", "human"))
            except ScoreRangeError as err:
                raise HTTPException(400, detail={
                    "reason": "score_range", "rejected": err.rejected})
        return {"applied": len(parsed)}

    @app.get("/metrics/summary")
    def metrics_summary():
        with lock:
            n = len(archive)
            if n == 0:
                return {"size": 0}
            forest = archive.phylogeny()
            balance = metrics.j1_index(forest)
            coverage = metrics.visual_coverage(
                archive, DownsampleImageEmbedder(), k=min(100, n))
            rated = sum(len(e.ratings) for e in archive.entries)
        return {"size": n, "roots": len(forest.roots), "tree_balance": balance,
                "visual_coverage": coverage, "ratings_applied": rated}

    if ui_dir is not None and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

        @app.get("/")
        def index():
            return RedirectResponse("/ui/")

    return app


def serve(archive_dir: str | Path, port: int = 8000, seed: int = 0,
          ui_dir: str | Path | None = None, host: str = "127.0.0.1") -> None:
    """Open the archive and serve it (blocking)."""
    import uvicorn

    archive_dir = Path(archive_dir)
    archive = Archive.open(archive_dir)
    registry = InnovationRegistry()
    innovations = archive_dir / "innovations.jsonl"
    if innovations.exists():
        with open(innovations, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    registry.replay_event(json.loads(line))
    app = create_app(archive, registry, seed=seed,
                     innovations_path=innovations, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
