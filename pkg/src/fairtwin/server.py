"""Live pairwise preference elicitation over HTTP.

A session walks a human through a seeded queue of same-context solution
pairs; every answer is appended to a per-session event log and fsynced
before it is acknowledged, so a crash loses nothing. Finalizing replays the
log into a preference dataset file with the same schema the synthetic
pipeline produces.
"""

from __future__ import annotations

import itertools
import json
import os
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .instance import Instance, flatten, load_instance
from .pairs import PreferenceDataset, PreferencePair, save_dataset
from .pool import load_pool
from .scoring import extract_features


class SessionError(Exception):
    def __init__(self, status_code: int, error: str, detail: str):
        super().__init__(detail)
        self.status_code = status_code
        self.error = error
        self.detail = detail


def _sample_queue(pool, n_pairs: int, seed: int):
    """Same-context pair indices, allocated proportionally and shuffled."""
    by_ctx: dict = {}
    for i, e in enumerate(pool.entries):
        by_ctx.setdefault(e.context, []).append(i)
    contexts = sorted(by_ctx)
    candidates = {c: list(itertools.combinations(by_ctx[c], 2)) for c in contexts}
    avail = {c: len(candidates[c]) for c in contexts}
    total = sum(avail.values())
    if n_pairs > total:
        raise SessionError(400, "too_many_pairs", f"requested {n_pairs} pairs but only {total} exist")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 5)))
    quota = {c: int(np.floor(n_pairs * avail[c] / total)) for c in contexts}
    remaining = n_pairs - sum(quota.values())
    while remaining > 0:
        for pos in rng.permutation(len(contexts)):
            c = contexts[int(pos)]
            if remaining == 0:
                break
            if quota[c] < avail[c]:
                quota[c] += 1
                remaining -= 1
    chosen = []
    for c in contexts:
        if quota[c] == 0:
            continue
        picks = rng.choice(avail[c], size=quota[c], replace=False)
        chosen.extend((c, *candidates[c][int(k)]) for k in sorted(int(v) for v in picks))
    order = rng.permutation(len(chosen))
    return [chosen[int(i)] for i in order]


class Session:
    """One annotator's queue; all mutations run under the session lock."""

    def __init__(self, session_id: str, directory: Path, config: dict):
        self.id = session_id
        self.directory = directory
        self.config = config
        self.lock = threading.Lock()
        self.inst = load_instance(config["instance"])
        self.pool = load_pool(config["pool"], self.inst)
        self.queue = [tuple(entry) for entry in config["queue"]]
        self.answers: dict = {}  # pair index -> "A" | "B" | "skip"
        self.order: list = []    # answered (non-skip) pair indices, in answer order

    @property
    def events_path(self) -> Path:
        return self.directory / "events.jsonl"

    def append_event(self, event: dict):
        with open(self.events_path, "a") as fh:
            fh.write(json.dumps(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def apply_choice(self, pair_index: int, choice: str):
        self.answers[pair_index] = choice
        if choice != "skip":
            self.order.append(pair_index)

    def current_index(self):
        for k in range(len(self.queue)):
            if k not in self.answers:
                return k
        return None

    def counters(self) -> dict:
        answered = sum(1 for v in self.answers.values() if v != "skip")
        skipped = sum(1 for v in self.answers.values() if v == "skip")
        return {
            "queued": len(self.queue),
            "answered": answered,
            "skipped": skipped,
            "remaining": len(self.queue) - answered - skipped,
            "done": answered + skipped == len(self.queue),
        }

    def presentation(self, k: int) -> dict:
        ctx, i, j = self.queue[k]
        def side(entry_idx):
            e = self.pool.entries[entry_idx]
            loads = e.allocation.x.sum(axis=0)
            return {
                "j_orig": e.j_orig,
                "features": [float(v) for v in extract_features(e.allocation, self.inst)],
                "facility_loads": {f: float(v) for f, v in zip(self.inst.facility_ids, loads)},
                "open_temporaries": [f for f, v in e.allocation.activation(self.inst).items() if v],
            }
        return {"pair_id": k, "x0": ctx, "a": side(i), "b": side(j)}

    def dataset(self) -> PreferenceDataset:
        pairs = []
        for k in self.order:
            ctx, i, j = self.queue[k]
            ua = flatten(self.pool.entries[i].allocation, self.inst)
            ub = flatten(self.pool.entries[j].allocation, self.inst)
            if self.answers[k] == "A":
                pairs.append(PreferencePair(context=ctx, u_pref=ua, u_other=ub))
            else:
                pairs.append(PreferencePair(context=ctx, u_pref=ub, u_other=ua))
        return PreferenceDataset(
            pairs=pairs,
            provenance={
                "source": "elicitation",
                "session": self.id,
                "instance": str(self.config["instance"]),
                "pool": str(self.config["pool"]),
                "seed": self.config["seed"],
            },
        )


class SessionStore:
    def __init__(self, data_dir: Path):
        self.data_dir = Path(data_dir)
        (self.data_dir / "sessions").mkdir(parents=True, exist_ok=True)
        self.sessions: dict = {}
        self.lock = threading.Lock()

    def create(self, instance_path: str, pool_path: str, n_pairs: int, seed: int) -> Session:
        if not Path(instance_path).exists():
            raise SessionError(400, "missing_instance", f"instance file {instance_path} not found")
        if not Path(pool_path).exists():
            raise SessionError(400, "missing_pool", f"pool file {pool_path} not found")
        inst = load_instance(instance_path)
        pool = load_pool(pool_path, inst)
        queue = _sample_queue(pool, n_pairs, seed)
        session_id = uuid.uuid4().hex[:12]
        directory = self.data_dir / "sessions" / session_id
        directory.mkdir(parents=True)
        config = {
            "instance": str(instance_path),
            "pool": str(pool_path),
            "n_pairs": n_pairs,
            "seed": seed,
            "queue": [list(entry) for entry in queue],
        }
        session = Session(session_id, directory, config)
        session.append_event({"type": "created", "config": config})
        with self.lock:
            self.sessions[session_id] = session
        return session

    def _load_from_disk(self, session_id: str):
        directory = self.data_dir / "sessions" / session_id
        events_path = directory / "events.jsonl"
        if not events_path.exists():
            return None
        session = None
        for line in events_path.read_text().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event["type"] == "created":
                session = Session(session_id, directory, event["config"])
            elif event["type"] == "choice" and session is not None:
                session.apply_choice(int(event["pair_id"]), event["choice"])
        return session

    def get(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
            if session is None:
                session = self._load_from_disk(session_id)
                if session is None:
                    raise SessionError(404, "unknown_session", f"no session {session_id}")
                self.sessions[session_id] = session
        return session


class CreateSessionBody(BaseModel):
    instance: str
    pool: str
    n_pairs: int
    seed: int = 0


class ChoiceBody(BaseModel):
    pair_id: int
    choice: str


def create_app(data_dir) -> FastAPI:
    app = FastAPI(title="fairtwin elicitation")
    store = SessionStore(Path(data_dir))
    app.state.store = store

    @app.exception_handler(SessionError)
    async def _session_error(_: Request, exc: SessionError):
        return JSONResponse(status_code=exc.status_code, content={"error": exc.error, "detail": exc.detail})

    @app.post("/v1/sessions")
    def create_session(body: CreateSessionBody):
        if body.n_pairs < 1:
            raise SessionError(400, "bad_request", "n_pairs must be at least 1")
        session = store.create(body.instance, body.pool, body.n_pairs, body.seed)
        return {"session_id": session.id}

    @app.get("/v1/sessions/{session_id}/next")
    def next_pair(session_id: str):
        session = store.get(session_id)
        with session.lock:
            k = session.current_index()
            if k is None:
                return {"done": True}
            return session.presentation(k)

    @app.post("/v1/sessions/{session_id}/choice")
    def submit_choice(session_id: str, body: ChoiceBody):
        session = store.get(session_id)
        if body.choice not in ("A", "B", "skip"):
            raise SessionError(400, "bad_choice", f"choice must be A, B, or skip, got {body.choice!r}")
        with session.lock:
            current = session.current_index()
            if body.pair_id in session.answers:
                raise SessionError(409, "already_answered", f"pair {body.pair_id} was already answered")
            if current is None or body.pair_id != current:
                raise SessionError(409, "stale_pair", f"pair {body.pair_id} is not the outstanding pair")
            session.append_event({"type": "choice", "pair_id": body.pair_id, "choice": body.choice})
            session.apply_choice(body.pair_id, body.choice)
            counters = session.counters()
        return {"accepted": True, "answered": counters["answered"], "remaining": counters["remaining"]}

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        session = store.get(session_id)
        with session.lock:
            ds = session.dataset()
            if len(ds) == 0:
                raise SessionError(400, "empty_session", "no answered pairs to finalize")
            out = session.directory / "dataset.jsonl"
            save_dataset(ds, out)
        return {"dataset": str(out), "pairs": len(ds)}

    @app.get("/v1/sessions/{session_id}/status")
    def status(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return session.counters()

    return app
