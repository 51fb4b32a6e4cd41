"""Four-phase Socratic tutoring session state machine.

A session opens with a review turn, loops through guidance and
rectification driven by answer checks, and always ends on a summarization
turn (forced when the turn cap is reached). Target phases per student
reply:

    review        -> guidance
    guidance      -> match: summarization | mismatch: rectification
                     | no answer: guidance
    rectification -> match: summarization
                     | mismatch: rectification, at most 2 in a row, then
                       guidance with a stronger hint appended
                     | no answer: guidance

The prompted model is asked to open each reply with a phase tag. Tags are
parsed leniently; a tag that is missing, or that would break the
review (guidance|rectification)* summarization shape, is replaced by the
scheduled phase and recorded as an event rather than trusted.

State is an immutable value; every transition appends events to the
session log, so persisted sessions replay to byte-identical state.
"""
from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Any

from .answers import answer_literals, contains_answer_candidate, normalize_answer
from .llm import ChatRequest, LLMClient, RetryPolicy
from .prompting import PromptContext, SocraticPrompt, build_context, default_prompt, truncate_history
from .types import Conversation, MathProblem, QuestionType, Speaker, TeachingPhase, Utterance


class AnswerCheck(str, Enum):
    MATCH = "match"
    MISMATCH = "mismatch"
    INDETERMINATE = "indeterminate"


class SessionStatus(str, Enum):
    ACTIVE = "active"
    COMPLETED = "completed"
    ABORTED = "aborted"


class SessionNotActive(RuntimeError):
    pass


STRONG_HINT_DIRECTIVE = (
    "The student is stuck after repeated corrections: give a much more concrete hint "
    "for the very next step, still without stating the final answer."
)

_PHASE_TAGS = {
    "REVIEW": TeachingPhase.REVIEW,
    "GUIDE": TeachingPhase.GUIDANCE,
    "RECTIFY": TeachingPhase.RECTIFICATION,
    "SUMMARY": TeachingPhase.SUMMARIZATION,
}
_TAG_FOR_PHASE = {phase: tag for tag, phase in _PHASE_TAGS.items()}
_TAG_RE = re.compile(r"^\s*[\[【]\s*([A-Za-z]+)\s*[\]】]", re.IGNORECASE)


@dataclass(frozen=True)
class SessionConfig:
    max_turns: int = 10
    rectification_limit: int = 2  # consecutive rectification turns before escalating
    temperature: float = 0.7
    max_new_tokens: int = 512
    model_name: str = "default"
    context_budget: int | None = None
    retry: RetryPolicy = RetryPolicy()


@dataclass(frozen=True)
class SessionEvent:
    type: str
    timestamp: str
    payload: dict[str, Any]


@dataclass(frozen=True)
class SessionState:
    session_id: str
    problem: MathProblem
    history: Conversation
    phase: TeachingPhase
    status: SessionStatus
    turn_count: int
    max_turns: int
    created_at: str
    updated_at: str
    disclosure_count: int = 0
    log: tuple[SessionEvent, ...] = ()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def parse_phase_tag(text: str) -> TeachingPhase | None:
    m = _TAG_RE.match(text)
    if m is None:
        return None
    return _PHASE_TAGS.get(m.group(1).upper())


def classify_phase(teacher_text: str, fallback: TeachingPhase) -> tuple[TeachingPhase, bool]:
    """Parse the leading phase tag; fall back to the scheduled phase.

    Returns ``(phase, tag_found)`` where ``tag_found`` is False when the tag
    was missing or unknown and the fallback was used.
    """
    parsed = parse_phase_tag(teacher_text)
    if parsed is None:
        return fallback, False
    return parsed, True


def check_answer(student_text: str, problem: MathProblem) -> AnswerCheck:
    """Compare the student's reply against the problem's final answer.

    Indeterminate when the text carries no answer candidate at all (a pure
    question or acknowledgement); otherwise match iff the normalized forms
    are equal.
    """
    accept_letter = problem.question_type is QuestionType.MULTIPLE_CHOICE
    if not contains_answer_candidate(student_text, accept_choice_letter=accept_letter):
        return AnswerCheck.INDETERMINATE
    if normalize_answer(student_text) == normalize_answer(problem.final_answer):
        return AnswerCheck.MATCH
    return AnswerCheck.MISMATCH


def discloses_answer(teacher_text: str, problem: MathProblem) -> bool:
    """True when the teacher text states the final answer outright."""
    target = normalize_answer(problem.final_answer)
    if target.is_numeric:
        return any(lit == target for lit in answer_literals(teacher_text))
    # Non-numeric answers (choice letters, short words): standalone token match.
    from .tokenizer import tokenize

    return str(target.value) in tokenize(teacher_text)


def phase_prompt(
    base: SocraticPrompt, target: TeachingPhase, *, strong_hint: bool = False
) -> SocraticPrompt:
    """Derive the per-turn prompt steering the model toward ``target``."""
    lines = [
        base.text,
        f"For your next reply, respond in the {target.value} phase and begin with the tag "
        f"[{_TAG_FOR_PHASE[target]}].",
    ]
    if strong_hint:
        lines.append(STRONG_HINT_DIRECTIVE)
    return SocraticPrompt(text="\n".join(lines), version=base.version)


def _trailing_rectifications(history: Conversation) -> int:
    count = 0
    for utt in reversed(history.utterances):
        if utt.role is not Speaker.TEACHER:
            continue
        if utt.phase is TeachingPhase.RECTIFICATION:
            count += 1
        else:
            break
    return count


def _select_target(
    state: SessionState, check: AnswerCheck, config: SessionConfig
) -> tuple[TeachingPhase, bool]:
    """Transition table; returns (target phase, escalate with a strong hint)."""
    if state.phase is TeachingPhase.REVIEW:
        return TeachingPhase.GUIDANCE, False
    if check is AnswerCheck.MATCH:
        return TeachingPhase.SUMMARIZATION, False
    if check is AnswerCheck.INDETERMINATE:
        return TeachingPhase.GUIDANCE, False
    if state.phase is TeachingPhase.RECTIFICATION:
        if _trailing_rectifications(state.history) >= config.rectification_limit:
            return TeachingPhase.GUIDANCE, True
        return TeachingPhase.RECTIFICATION, False
    return TeachingPhase.RECTIFICATION, False


def _resolve_phase(
    parsed: TeachingPhase | None, target: TeachingPhase, *, opening: bool
) -> tuple[TeachingPhase, str | None]:
    """Clamp the model's tag to a phase legal at this position.

    Returns (phase, event_type) where event_type is 'tag_missing',
    'tag_mismatch' or None.
    """
    if parsed is None:
        return target, "tag_missing"
    if opening:
        return (TeachingPhase.REVIEW, None if parsed is TeachingPhase.REVIEW else "tag_mismatch")
    if target is TeachingPhase.SUMMARIZATION:
        return (target, None if parsed is TeachingPhase.SUMMARIZATION else "tag_mismatch")
    if parsed in (TeachingPhase.GUIDANCE, TeachingPhase.RECTIFICATION):
        return parsed, None
    return target, "tag_mismatch"


def _build_turn_context(
    prompt: SocraticPrompt,
    problem: MathProblem,
    history: tuple[Utterance, ...],
    config: SessionConfig,
) -> PromptContext:
    ctx = build_context(prompt, problem, history)
    if config.context_budget is not None:
        ctx = truncate_history(ctx, config.context_budget)
    return ctx


def _request(ctx: PromptContext, config: SessionConfig) -> ChatRequest:
    return ChatRequest(
        messages=ctx.messages,
        temperature=config.temperature,
        max_new_tokens=config.max_new_tokens,
        model_name=config.model_name,
    )


def start_session(
    problem: MathProblem,
    config: SessionConfig,
    llm: LLMClient,
    *,
    prompt: SocraticPrompt | None = None,
    session_id: str | None = None,
) -> tuple[SessionState, Utterance]:
    """Open a session with a review-phase teacher turn.

    Backend failures propagate before any state exists, so a failed start
    leaves nothing behind.
    """
    base = prompt or default_prompt()
    sid = session_id or uuid.uuid4().hex
    turn_prompt = phase_prompt(base, TeachingPhase.REVIEW)
    ctx = _build_turn_context(turn_prompt, problem, (), config)
    response = llm.complete(_request(ctx, config), config.retry)

    parsed = parse_phase_tag(response.text)
    phase, tag_event = _resolve_phase(parsed, TeachingPhase.REVIEW, opening=True)
    now = _now()
    opening = Utterance(role=Speaker.TEACHER, text=response.text, index=0, phase=phase)

    events = [
        SessionEvent(
            "session_started",
            now,
            {"session_id": sid, "problem_id": problem.id, "max_turns": config.max_turns},
        )
    ]
    if tag_event:
        events.append(SessionEvent(tag_event, now, {"index": 0, "target": phase.value}))
    disclosures = 0
    if discloses_answer(response.text, problem):
        disclosures = 1
        events.append(SessionEvent("answer_disclosure", now, {"index": 0}))
    events.append(
        SessionEvent("teacher_turn", now, {"text": response.text, "phase": phase.value})
    )

    state = SessionState(
        session_id=sid,
        problem=problem,
        history=Conversation(problem_id=problem.id, utterances=(opening,)),
        phase=phase,
        status=SessionStatus.ACTIVE,
        turn_count=1,
        max_turns=config.max_turns,
        created_at=now,
        updated_at=now,
        disclosure_count=disclosures,
        log=tuple(events),
    )
    return state, opening


def advance(
    state: SessionState,
    student_text: str,
    llm: LLMClient,
    *,
    config: SessionConfig | None = None,
    prompt: SocraticPrompt | None = None,
) -> tuple[SessionState, Utterance]:
    """Append the student turn, pick the next phase, and generate the reply.

    Any llm-client error propagates without touching ``state`` (the student
    utterance is only committed together with the teacher response).
    """
    if state.status is not SessionStatus.ACTIVE:
        raise SessionNotActive(f"session {state.session_id} is {state.status.value}")
    if not student_text.strip():
        raise ValueError("student text must be non-empty")
    config = config or SessionConfig(max_turns=state.max_turns)
    base = prompt or default_prompt()

    student = Utterance(
        role=Speaker.STUDENT, text=student_text, index=len(state.history.utterances)
    )
    check = check_answer(student_text, state.problem)
    target, strong_hint = _select_target(state, check, config)

    next_turn = state.turn_count + 1
    if next_turn >= state.max_turns:
        target = TeachingPhase.SUMMARIZATION  # force a closing summary at the cap

    turn_prompt = phase_prompt(base, target, strong_hint=strong_hint)
    prospective = (*state.history.utterances, student)
    ctx = _build_turn_context(turn_prompt, state.problem, prospective, config)
    response = llm.complete(_request(ctx, config), config.retry)

    parsed = parse_phase_tag(response.text)
    phase, tag_event = _resolve_phase(parsed, target, opening=False)
    now = _now()
    teacher = Utterance(
        role=Speaker.TEACHER, text=response.text, index=student.index + 1, phase=phase
    )

    events: list[SessionEvent] = [
        SessionEvent(
            "student_turn", now, {"text": student_text, "check": check.value}
        )
    ]
    if tag_event:
        events.append(
            SessionEvent(tag_event, now, {"index": teacher.index, "target": target.value})
        )
    disclosures = state.disclosure_count
    if phase in (TeachingPhase.REVIEW, TeachingPhase.GUIDANCE) and discloses_answer(
        response.text, state.problem
    ):
        disclosures += 1
        events.append(SessionEvent("answer_disclosure", now, {"index": teacher.index}))
    events.append(
        SessionEvent("teacher_turn", now, {"text": response.text, "phase": phase.value})
    )

    status = state.status
    if phase is TeachingPhase.SUMMARIZATION:
        status = SessionStatus.COMPLETED
        events.append(SessionEvent("session_completed", now, {"turns": next_turn}))

    new_state = replace(
        state,
        history=Conversation(
            problem_id=state.problem.id,
            utterances=(*prospective, teacher),
            personas=state.history.personas,
        ),
        phase=phase,
        status=status,
        turn_count=next_turn,
        updated_at=now,
        disclosure_count=disclosures,
        log=(*state.log, *events),
    )
    return new_state, teacher
