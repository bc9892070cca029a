"""HTTP service: rulemap storage with version history, leaf-context editing,
and single-case evaluation with full traces. Backend for the companion UI.

Persistence is file-backed: one canonical JSON document per version under
``store_dir/<map id>/v<N>.json`` plus an append-only ``history.json``. Writes
are serialized per rulemap id; reads are unrestricted.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Optional

from fastapi import Body, FastAPI, Header, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .client import ChatClient, DecodingConfig
from .core import (
    Branch,
    Leaf,
    Mode,
    Node,
    RuleMap,
    UnknownLeaf,
    evaluate,
    evaluate_with_assignment,
    validate,
)
from .dsl import from_canonical, parse, to_canonical
from .errors import CacheMiss, ConfigError, LeafFailure, RulemapError, SchemaError
from .leaves import CaseRecord, EvaluatorEnv, FailurePolicy, LeafPolicy


class RulemapStore:
    """File-backed versioned store; single writer per rulemap id."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._master = threading.Lock()

    def _lock(self, map_id: str) -> threading.Lock:
        with self._master:
            return self._locks.setdefault(map_id, threading.Lock())

    def _dir(self, map_id: str) -> Path:
        return self.root / map_id

    def list_ids(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def history(self, map_id: str) -> list[dict]:
        path = self._dir(map_id) / "history.json"
        if not path.is_file():
            return []
        return json.loads(path.read_text(encoding="utf-8"))["versions"]

    def current_version(self, map_id: str) -> Optional[int]:
        versions = self.history(map_id)
        return versions[-1]["version"] if versions else None

    def load(self, map_id: str, version: Optional[int] = None) -> RuleMap:
        current = self.current_version(map_id)
        if current is None:
            raise KeyError(map_id)
        version = version or current
        path = self._dir(map_id) / f"v{version}.json"
        if not path.is_file():
            raise KeyError(f"{map_id} v{version}")
        return from_canonical(json.loads(path.read_text(encoding="utf-8")))

    def save(self, map_id: str, rulemap: RuleMap, summary: str) -> int:
        """Append a new version; prior versions are never touched."""
        with self._lock(map_id):
            current = self.current_version(map_id) or 0
            version = current + 1
            stored = RuleMap(id=map_id, version=version, title=rulemap.title,
                             root=rulemap.root, nodes=rulemap.nodes,
                             metadata=rulemap.metadata)
            directory = self._dir(map_id)
            directory.mkdir(parents=True, exist_ok=True)
            (directory / f"v{version}.json").write_text(
                json.dumps(to_canonical(stored), ensure_ascii=False, indent=2)
                + "\n", encoding="utf-8")
            history = self.history(map_id)
            history.append({
                "version": version,
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "summary": summary,
            })
            (directory / "history.json").write_text(
                json.dumps({"versions": history}, ensure_ascii=False, indent=2)
                + "\n", encoding="utf-8")
            return version


@dataclass
class RunRecord:
    run_id: str
    config_path: str
    status: str = "pending"  # pending -> running -> done | failed
    error: str = ""
    results: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"run_id": self.run_id, "config_path": self.config_path,
                "status": self.status, "error": self.error,
                "results": self.results}


class EvaluateBody(BaseModel):
    case_text: str = ""
    case_id: str = "adhoc"
    mode: str = "full"
    overrides: dict[str, bool] = {}
    failure_policy: str = "strict"


class ContextBody(BaseModel):
    context: str


def _issue_list(report) -> list[dict]:
    return [{"severity": i.severity, "node_id": i.node_id, "code": i.code,
             "message": i.message} for i in report.issues]


def seed_fixtures(store: RulemapStore) -> list[str]:
    """Load the bundled example rulemaps into an empty store."""
    seeded = []
    fixtures = resources.files("rulemap") / "fixtures"
    for name in ("stgb130.rmap", "stgb130_fine.rmap"):
        rulemap = parse((fixtures / name).read_text(encoding="utf-8"))
        if store.current_version(rulemap.id) is None:
            store.save(rulemap.id, rulemap, f"seeded from {name}")
            seeded.append(rulemap.id)
    return seeded


def create_app(store_dir: str | Path,
               env: Optional[EvaluatorEnv] = None,
               model: Optional[str] = None) -> FastAPI:
    """Build the service. ``env`` defaults to a client configured from the
    LLM_* environment variables on first use; ``model`` picks the decoding
    model id (falls back to $LLM_MODEL)."""
    import os

    store = RulemapStore(store_dir)
    app = FastAPI(title="rulemap service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.store = store
    app.state.runs = {}
    app.state.runs_lock = threading.Lock()
    app.state.env = env
    app.state.model = model or os.environ.get("LLM_MODEL", "stub-model")

    def evaluator_env(failure_policy: str) -> EvaluatorEnv:
        policy = (FailurePolicy.LENIENT if failure_policy == "lenient"
                  else FailurePolicy.STRICT)
        if app.state.env is not None:
            app.state.env.failure_policy = policy
            return app.state.env
        client = ChatClient.from_env()
        return EvaluatorEnv(
            client=client,
            policy=LeafPolicy(decoding=DecodingConfig(model=app.state.model)),
            failure_policy=policy,
        )

    # -- rulemap storage ----------------------------------------------------

    @app.get("/rulemaps")
    def list_rulemaps():
        out = []
        for map_id in store.list_ids():
            version = store.current_version(map_id)
            rulemap = store.load(map_id)
            out.append({"id": map_id, "version": version,
                        "title": rulemap.title})
        return {"rulemaps": out}

    @app.get("/rulemaps/{map_id}")
    def get_rulemap(map_id: str, version: Optional[int] = None):
        try:
            rulemap = store.load(map_id, version)
        except KeyError:
            raise HTTPException(404, f"unknown rulemap {map_id!r}")
        return to_canonical(rulemap)

    @app.put("/rulemaps/{map_id}")
    def upsert_rulemap(map_id: str, doc: dict = Body(...),
                       if_match: Optional[str] = Header(default=None)):
        try:
            rulemap = from_canonical(doc)
        except SchemaError as exc:
            raise HTTPException(400, {"errors": [str(exc)]})
        report = validate(rulemap)
        if not report.ok:
            raise HTTPException(400, {"errors": _issue_list(report)})
        current = store.current_version(map_id)
        if if_match is not None and current is not None \
                and str(current) != if_match:
            raise HTTPException(
                409, f"version conflict: current is {current}, "
                     f"submitted against {if_match}")
        version = store.save(map_id, rulemap, "upsert")
        return {"id": map_id, "version": version,
                "warnings": _issue_list(report)}

    @app.get("/rulemaps/{map_id}/versions")
    def list_versions(map_id: str):
        history = store.history(map_id)
        if not history:
            raise HTTPException(404, f"unknown rulemap {map_id!r}")
        return {"id": map_id, "versions": history}

    @app.put("/rulemaps/{map_id}/nodes/{node_id}/context")
    def update_leaf_context(map_id: str, node_id: str, body: ContextBody):
        try:
            rulemap = store.load(map_id)
        except KeyError:
            raise HTTPException(404, f"unknown rulemap {map_id!r}")
        node = rulemap.nodes.get(node_id)
        if node is None:
            raise HTTPException(404, f"unknown node {node_id!r}")
        if isinstance(node.kind, Branch):
            raise HTTPException(409, f"node {node_id!r} is a branch; "
                                     "only leaves carry context")
        new_leaf = Leaf(question=node.kind.question, binding=node.kind.binding,
                        context_text=body.context)
        nodes = dict(rulemap.nodes)
        nodes[node_id] = Node(node.id, node.label, new_leaf)
        updated = RuleMap(id=rulemap.id, version=rulemap.version,
                          title=rulemap.title, root=rulemap.root, nodes=nodes,
                          metadata=rulemap.metadata)
        version = store.save(map_id, updated, f"context:{node_id}")
        warnings = []
        if not body.context:
            warnings.append({"severity": "warning", "node_id": node_id,
                             "code": "EmptyLeafContext",
                             "message": "context is empty"})
        return {"id": map_id, "version": version, "node_id": node_id,
                "warnings": warnings}

    # -- evaluation -----------------------------------------------------------

    @app.post("/rulemaps/{map_id}/evaluate")
    def evaluate_case(map_id: str, body: EvaluateBody):
        try:
            rulemap = store.load(map_id)
        except KeyError:
            raise HTTPException(404, f"unknown rulemap {map_id!r}")
        mode = Mode.SHORT_CIRCUIT if body.mode in ("short", "short_circuit") \
            else Mode.FULL
        overrides = {k: bool(v) for k, v in body.overrides.items()}
        leaf_ids = set(rulemap.leaf_ids())
        try:
            if leaf_ids <= set(overrides):
                # every leaf pinned: pure assignment evaluation, no client
                trace = evaluate_with_assignment(rulemap, overrides, mode,
                                                 case_id=body.case_id)
            else:
                if not body.case_text:
                    raise HTTPException(400, "case_text required unless every "
                                             "leaf is overridden")
                case = CaseRecord(id=body.case_id, text=body.case_text)
                trace = evaluate(rulemap, case,
                                 evaluator_env(body.failure_policy), mode,
                                 overrides=overrides)
        except UnknownLeaf as exc:
            raise HTTPException(400, str(exc))
        except LeafFailure as exc:
            raise HTTPException(502, {"node_id": exc.node_id,
                                      "kind": exc.kind.value,
                                      "detail": exc.detail})
        except (CacheMiss, ConfigError) as exc:
            raise HTTPException(502, str(exc))
        return trace.to_dict()

    # -- bench runs -----------------------------------------------------------

    @app.get("/runs")
    def list_runs():
        with app.state.runs_lock:
            return {"runs": [r.to_dict() for r in app.state.runs.values()]}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        with app.state.runs_lock:
            record = app.state.runs.get(run_id)
        if record is None:
            raise HTTPException(404, f"unknown run {run_id!r}")
        return record.to_dict()

    @app.post("/runs")
    def start_run(body: dict = Body(...)):
        config_path = body.get("config_path")
        if not config_path:
            raise HTTPException(400, "config_path required")
        with app.state.runs_lock:
            run_id = f"run-{len(app.state.runs) + 1}"
            record = RunRecord(run_id=run_id, config_path=config_path)
            app.state.runs[run_id] = record

        def execute():
            from .bench.runner import orchestrate

            record.status = "running"
            try:
                results = orchestrate(config_path)
                record.results = {
                    f"{method}/{model}": report.to_dict()
                    for (method, model), report in results.items()}
                record.status = "done"
            except Exception as exc:
                record.error = str(exc)
                record.status = "failed"

        threading.Thread(target=execute, daemon=True).start()
        return record.to_dict()

    return app


def run_server(store_dir: str | Path, port: int, host: str = "127.0.0.1",
               seed: bool = False) -> None:
    import uvicorn

    store = RulemapStore(store_dir)
    if seed:
        seeded = seed_fixtures(store)
        if seeded:
            print(f"seeded fixtures: {', '.join(seeded)}")
    app = create_app(store_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
