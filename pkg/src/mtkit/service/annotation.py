"""Blinded annotation campaign: sessions, durable rating journal, export.

The journal is append-only JSON lines. Two record kinds exist: ``session``
(the task table plus the private blinding map, written once per session)
and ``rating`` (one per submission, last one wins). Every append is
flushed and fsynced before the caller gets an acknowledgment, so a crash
after an ack can never lose the rating. Compaction rewrites the journal
to one final rating per task, folding superseded submissions into the
record's history so the audit trail survives.
"""

import json
import logging
import os
import random
import secrets
import threading
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from ..ingest import ParallelPair

log = logging.getLogger(__name__)

DIRECTIONS = ("ce-ru", "ru-ce")


class AnnotationError(ValueError):
    """Campaign-level rule violation."""


class DuplicateSessionError(AnnotationError):
    """Annotator already has a session and force was not given."""


class UnknownTaskError(AnnotationError):
    """Rating submitted for a task id the store has never seen."""


class ScoreRangeError(AnnotationError):
    """Rating score outside 1..5."""


@dataclass(frozen=True)
class AnnotationTask:
    """One blinded rating unit: a single hypothesis in a single direction.

    ``blinded_system_key`` resolves to a real system only through the
    session's private map; the task itself never carries a system name.
    """

    task_id: str
    annotator_id: str
    direction: str
    item_id: str
    source_text: str
    hypothesis_text: str
    blinded_system_key: str
    status: str = "pending"

    def client_view(self) -> dict:
        # client-bound payload: no blinding key, no item id
        return {
            "task_id": self.task_id,
            "direction": self.direction,
            "source_text": self.source_text,
            "hypothesis_text": self.hypothesis_text,
            "status": self.status,
        }

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "direction": self.direction,
            "item_id": self.item_id,
            "source_text": self.source_text,
            "hypothesis_text": self.hypothesis_text,
            "blinded_system_key": self.blinded_system_key,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationTask":
        return cls(
            task_id=d["task_id"], annotator_id=d["annotator_id"],
            direction=d["direction"], item_id=d["item_id"],
            source_text=d["source_text"], hypothesis_text=d["hypothesis_text"],
            blinded_system_key=d["blinded_system_key"],
        )


@dataclass(frozen=True)
class Rating:
    task_id: str
    score: int
    submitted_at: str

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "score": self.score,
                "submitted_at": self.submitted_at}


@dataclass(frozen=True)
class Session:
    """A created session: ordered tasks plus the private blinding map."""

    annotator_id: str
    seed: int
    created_at: str
    tasks: tuple[AnnotationTask, ...]
    system_by_key: Mapping[str, str]  # blinded key -> real system, server-side only


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def create_session(
    annotator_id: str,
    eval_pairs: Sequence[ParallelPair],
    systems: Mapping[str, Mapping[str, Sequence[str]]],
    per_system: int = 20,
    seed: int = 0,
    allow_overlap: bool = False,
) -> Session:
    """Sample per_system eval items per system, two direction-tasks each.

    Item choice and task order come from the seed; task ids and blinding
    keys are freshly randomized every call, so re-creating a session keeps
    the same task set under new opaque identifiers. Samples are disjoint
    across systems unless allow_overlap is set.
    """
    if per_system < 0:
        raise AnnotationError("per_system must be >= 0")
    if not systems:
        raise AnnotationError("no systems configured")
    for name, outputs in systems.items():
        for direction in DIRECTIONS:
            hyps = outputs.get(direction)
            if hyps is None:
                raise AnnotationError(f"system {name} missing direction {direction}")
            if len(hyps) != len(eval_pairs):
                raise AnnotationError(
                    f"system {name} {direction}: {len(hyps)} hypotheses for "
                    f"{len(eval_pairs)} eval items")

    names = list(systems)
    rng = random.Random(seed)
    needed = per_system * len(names) if not allow_overlap else per_system
    if needed > len(eval_pairs):
        raise AnnotationError(
            f"need {needed} eval items, have {len(eval_pairs)}")

    if allow_overlap:
        chosen = {name: rng.sample(range(len(eval_pairs)), per_system) for name in names}
    else:
        flat = rng.sample(range(len(eval_pairs)), per_system * len(names))
        chosen = {name: flat[i * per_system:(i + 1) * per_system]
                  for i, name in enumerate(names)}

    key_by_system = {name: secrets.token_hex(8) for name in names}
    tasks: list[AnnotationTask] = []
    for name in names:
        for idx in chosen[name]:
            pair = eval_pairs[idx]
            for direction in DIRECTIONS:
                source = pair.src.text if direction == "ce-ru" else pair.tgt.text
                tasks.append(AnnotationTask(
                    task_id=secrets.token_hex(8),
                    annotator_id=annotator_id,
                    direction=direction,
                    item_id=pair.id,
                    source_text=source,
                    hypothesis_text=systems[name][direction][idx],
                    blinded_system_key=key_by_system[name],
                ))
    rng.shuffle(tasks)

    # post: each (annotator, item, system) appears exactly once per direction
    usage = Counter((t.item_id, t.blinded_system_key, t.direction) for t in tasks)
    assert all(n == 1 for n in usage.values())

    return Session(
        annotator_id=annotator_id, seed=seed, created_at=_now(),
        tasks=tuple(tasks),
        system_by_key={v: k for k, v in key_by_system.items()},
    )


class RatingStore:
    """Append-only journal with in-memory replayed state.

    Single-writer: every mutation takes the store lock and is fsynced
    before it returns. Readers see the in-memory state.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._sessions: list[Session] = []
        self._tasks: dict[str, AnnotationTask] = {}
        self._system_of: dict[str, str] = {}  # task_id -> real system name
        self._final: dict[str, Rating] = {}
        self._history: dict[str, list[Rating]] = {}
        if self.path.exists():
            self._replay()

    # --- journal ------------------------------------------------------------------

    def _replay(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise AnnotationError(
                        f"{self.path}:{line_no}: corrupt journal line: {exc.msg}")
                self._apply(record)

    def _apply(self, record: dict) -> None:
        kind = record.get("kind")
        if kind == "session":
            session = Session(
                annotator_id=record["annotator_id"],
                seed=record["seed"],
                created_at=record["created_at"],
                tasks=tuple(AnnotationTask.from_dict(t) for t in record["tasks"]),
                system_by_key=dict(record["system_by_key"]),
            )
            self._index_session(session)
        elif kind == "rating":
            for old in record.get("history", []):
                self._record_rating(Rating(
                    task_id=record["task_id"], score=old["score"],
                    submitted_at=old["submitted_at"]))
            self._record_rating(Rating(
                task_id=record["task_id"], score=record["score"],
                submitted_at=record["submitted_at"]))
        else:
            raise AnnotationError(f"unknown journal record kind: {kind!r}")

    def _append(self, record: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _index_session(self, session: Session) -> None:
        self._sessions.append(session)
        for task in session.tasks:
            self._tasks[task.task_id] = task
            self._system_of[task.task_id] = session.system_by_key[task.blinded_system_key]

    def _record_rating(self, rating: Rating) -> None:
        prior = self._final.get(rating.task_id)
        if prior is not None:
            self._history.setdefault(rating.task_id, []).append(prior)
        self._final[rating.task_id] = rating

    # --- mutations ----------------------------------------------------------------

    def add_session(self, session: Session, force: bool = False) -> None:
        with self._lock:
            if any(s.annotator_id == session.annotator_id for s in self._sessions):
                if not force:
                    raise DuplicateSessionError(
                        f"annotator {session.annotator_id} already has a session "
                        "(use force to supersede)")
                log.warning("superseding session for annotator %s", session.annotator_id)
            self._append({
                "kind": "session",
                "annotator_id": session.annotator_id,
                "seed": session.seed,
                "created_at": session.created_at,
                "system_by_key": dict(session.system_by_key),
                "tasks": [t.to_dict() for t in session.tasks],
            })
            self._index_session(session)

    def submit_rating(self, task_id: str, score: int) -> Rating:
        if not isinstance(score, int) or isinstance(score, bool) or not 1 <= score <= 5:
            raise ScoreRangeError(f"score must be an integer in 1..5, got {score!r}")
        with self._lock:
            if task_id not in self._tasks:
                raise UnknownTaskError(f"unknown task: {task_id}")
            rating = Rating(task_id=task_id, score=score, submitted_at=_now())
            # durability contract: the journal line is fsynced before the
            # rating becomes visible or the caller is acknowledged
            self._append({"kind": "rating", **rating.to_dict()})
            self._record_rating(rating)
            return rating

    def compact(self) -> None:
        """Rewrite the journal: sessions, then one rating per task with history."""
        with self._lock:
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                for session in self._sessions:
                    fh.write(json.dumps({
                        "kind": "session",
                        "annotator_id": session.annotator_id,
                        "seed": session.seed,
                        "created_at": session.created_at,
                        "system_by_key": dict(session.system_by_key),
                        "tasks": [t.to_dict() for t in session.tasks],
                    }, ensure_ascii=False, sort_keys=True) + "\n")
                for task_id, rating in self._iter_final():
                    record = {"kind": "rating", **rating.to_dict()}
                    history = self._history.get(task_id)
                    if history:
                        record["history"] = [r.to_dict() for r in history]
                    fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.path)

    # --- queries ------------------------------------------------------------------

    def _iter_final(self):
        for session in self._sessions:
            for task in session.tasks:
                rating = self._final.get(task.task_id)
                if rating is not None:
                    yield task.task_id, rating

    def system_names(self) -> frozenset[str]:
        return frozenset(
            name for s in self._sessions for name in s.system_by_key.values())

    def has_session(self, annotator_id: str) -> bool:
        return any(s.annotator_id == annotator_id for s in self._sessions)

    def system_for(self, task_id: str) -> str:
        """Server-side blinding resolution for one task; export uses the same map."""
        try:
            return self._system_of[task_id]
        except KeyError:
            raise UnknownTaskError(f"unknown task id: {task_id}") from None

    def tasks_for(self, annotator_id: str) -> list[AnnotationTask]:
        """Latest session's tasks with live status, in session order."""
        latest = None
        for session in self._sessions:
            if session.annotator_id == annotator_id:
                latest = session
        if latest is None:
            return []
        return [
            replace(task, status="rated" if task.task_id in self._final else "pending")
            for task in latest.tasks
        ]

    def progress(self, annotator_id: str) -> dict:
        tasks = self.tasks_for(annotator_id)
        rated = sum(1 for t in tasks if t.status == "rated")
        return {"annotator_id": annotator_id, "total": len(tasks),
                "rated": rated, "pending": len(tasks) - rated}

    def history(self, task_id: str) -> list[Rating]:
        trail = list(self._history.get(task_id, []))
        final = self._final.get(task_id)
        if final is not None:
            trail.append(final)
        return trail

    def export(self) -> list[tuple[str, str, int]]:
        """Final ratings resolved to (system, direction, score), journal order."""
        return [
            (self._system_of[task_id], self._tasks[task_id].direction, rating.score)
            for task_id, rating in self._iter_final()
        ]


def export_ratings(store: RatingStore) -> list[tuple[str, str, int]]:
    return store.export()
