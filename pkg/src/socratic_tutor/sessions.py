"""Append-only JSONL persistence for tutoring sessions.

One file per session, one JSON event per line, fsynced when a teacher turn
commits. State is a pure fold over the event stream, so a crash mid-write
loses at most the uncommitted tail and replay always reproduces exactly
what was acknowledged.
"""
from __future__ import annotations

import json
import os
import threading
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping

from .llm import LLMClient
from .orchestrator import (
    SessionConfig,
    SessionEvent,
    SessionState,
    SessionStatus,
    advance,
    start_session,
)
from .prompting import SocraticPrompt, default_prompt
from .types import Conversation, MathProblem, Speaker, TeachingPhase, Utterance


class UnknownSessionError(KeyError):
    pass


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, session_id: str) -> Path:
        if not session_id.replace("-", "").isalnum():
            raise UnknownSessionError(session_id)
        return self.root / f"{session_id}.jsonl"

    def exists(self, session_id: str) -> bool:
        try:
            return self.path_for(session_id).exists()
        except UnknownSessionError:
            return False

    def list_sessions(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.jsonl"))

    def append_events(self, session_id: str, events: Iterable[SessionEvent]) -> None:
        path = self.path_for(session_id)
        with open(path, "a", encoding="utf-8") as fh:
            for event in events:
                record = {"type": event.type, "ts": event.timestamp, "payload": event.payload}
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read_events(self, session_id: str) -> list[SessionEvent]:
        path = self.path_for(session_id)
        if not path.exists():
            raise UnknownSessionError(session_id)
        events: list[SessionEvent] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                events.append(SessionEvent(record["type"], record["ts"], record["payload"]))
        return events

    def delete(self, session_id: str) -> None:
        path = self.path_for(session_id)
        if path.exists():
            path.unlink()


def fold_events(
    events: list[SessionEvent], problems: Mapping[str, MathProblem]
) -> SessionState:
    """Rebuild session state from its event log."""
    if not events or events[0].type != "session_started":
        raise ValueError("event log must open with session_started")
    head = events[0].payload
    problem = problems[head["problem_id"]]

    utterances: list[Utterance] = []
    disclosures = 0
    status = SessionStatus.ACTIVE
    phase = TeachingPhase.REVIEW
    for event in events:
        if event.type == "student_turn":
            utterances.append(
                Utterance(Speaker.STUDENT, event.payload["text"], index=len(utterances))
            )
        elif event.type == "teacher_turn":
            phase = TeachingPhase(event.payload["phase"])
            utterances.append(
                Utterance(
                    Speaker.TEACHER,
                    event.payload["text"],
                    index=len(utterances),
                    phase=phase,
                )
            )
        elif event.type == "answer_disclosure":
            disclosures += 1
        elif event.type == "session_completed":
            status = SessionStatus.COMPLETED

    turn_count = sum(1 for u in utterances if u.role is Speaker.TEACHER)
    return SessionState(
        session_id=head["session_id"],
        problem=problem,
        history=Conversation(problem_id=problem.id, utterances=tuple(utterances)),
        phase=phase,
        status=status,
        turn_count=turn_count,
        max_turns=head["max_turns"],
        created_at=events[0].timestamp,
        updated_at=events[-1].timestamp,
        disclosure_count=disclosures,
        log=tuple(events),
    )


class TutorEngine:
    """Catalog + store + client wiring with per-session write serialization.

    Distinct sessions run fully concurrently; writes to one session are
    serialized by a per-session lock, and reads are lock-free snapshots of
    immutable state.
    """

    def __init__(
        self,
        problems: Mapping[str, MathProblem],
        llm: LLMClient,
        store: SessionStore,
        *,
        prompt: SocraticPrompt | None = None,
        config: SessionConfig | None = None,
    ):
        self.problems = dict(problems)
        self.llm = llm
        self.store = store
        self.prompt = prompt or default_prompt()
        self.config = config or SessionConfig()
        self._states: dict[str, SessionState] = {}
        self._locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
        self._registry_lock = threading.Lock()

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks[session_id]

    def start(self, problem_id: str) -> SessionState:
        problem = self.problems.get(problem_id)
        if problem is None:
            raise KeyError(problem_id)
        state, _ = start_session(problem, self.config, self.llm, prompt=self.prompt)
        with self._lock_for(state.session_id):
            self.store.append_events(state.session_id, state.log)
            self._states[state.session_id] = state
        return state

    def advance(self, session_id: str, student_text: str) -> SessionState:
        with self._lock_for(session_id):
            state = self._load(session_id)
            new_state, _ = advance(
                state, student_text, self.llm, config=self.config, prompt=self.prompt
            )
            fresh = new_state.log[len(state.log):]
            self.store.append_events(session_id, fresh)
            self._states[session_id] = new_state
            return new_state

    def get(self, session_id: str) -> SessionState:
        state = self._states.get(session_id)
        if state is not None:
            return state
        with self._lock_for(session_id):
            return self._load(session_id)

    def _load(self, session_id: str) -> SessionState:
        state = self._states.get(session_id)
        if state is None:
            events = self.store.read_events(session_id)
            state = fold_events(events, self.problems)
            self._states[session_id] = state
        return state
