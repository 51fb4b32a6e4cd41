"""Conversation validation. Violations are data, not exceptions."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .types import Conversation, MathProblem, Speaker, TeachingPhase

DEFAULT_MIN_TURNS = 2
DEFAULT_MAX_TURNS = 15


class ViolationKind(str, Enum):
    UNKNOWN_PROBLEM = "UnknownProblem"
    ROLE_ORDER = "RoleOrder"
    EMPTY_TEXT = "EmptyText"
    PHASE_ON_STUDENT = "PhaseOnStudent"
    INDEX_ORDER = "IndexOrder"
    MISSING_SUMMARIZATION = "MissingSummarization"
    TURN_COUNT_OUT_OF_RANGE = "TurnCountOutOfRange"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    index: int | None
    detail: str


def validate_conversation(
    conv: Conversation,
    problems: Mapping[str, MathProblem] | None = None,
    *,
    min_turns: int = DEFAULT_MIN_TURNS,
    max_turns: int = DEFAULT_MAX_TURNS,
) -> list[Violation]:
    """Return every invariant breach in ``conv``; empty list iff valid.

    Checks: problem_id resolution (when ``problems`` is given), teacher-first
    strict role alternation, non-empty utterance text, phases only on teacher
    turns, positional indices, teacher-turn count within ``[min_turns,
    max_turns]``, and a terminal summarization phase. The summarization check
    applies only to conversations that carry phase tags at all, so untagged
    pre-annotation candidates are not rejected wholesale.
    """
    violations: list[Violation] = []

    if problems is not None and conv.problem_id not in problems:
        violations.append(
            Violation(
                ViolationKind.UNKNOWN_PROBLEM,
                None,
                f"problem_id {conv.problem_id!r} does not resolve",
            )
        )

    for pos, utt in enumerate(conv.utterances):
        expected = Speaker.TEACHER if pos % 2 == 0 else Speaker.STUDENT
        if utt.role is not expected:
            violations.append(
                Violation(
                    ViolationKind.ROLE_ORDER,
                    pos,
                    f"expected {expected.value} at index {pos}, got {utt.role.value}",
                )
            )
        if not utt.text.strip():
            violations.append(
                Violation(ViolationKind.EMPTY_TEXT, pos, "utterance text is empty")
            )
        if utt.phase is not None and utt.role is Speaker.STUDENT:
            violations.append(
                Violation(
                    ViolationKind.PHASE_ON_STUDENT,
                    pos,
                    f"student utterance carries phase {utt.phase.value}",
                )
            )
        if utt.index != pos:
            violations.append(
                Violation(
                    ViolationKind.INDEX_ORDER,
                    pos,
                    f"index field is {utt.index}, position is {pos}",
                )
            )

    teacher_utts = [u for u in conv.utterances if u.role is Speaker.TEACHER]
    turns = len(teacher_utts)
    if not (min_turns <= turns <= max_turns):
        violations.append(
            Violation(
                ViolationKind.TURN_COUNT_OUT_OF_RANGE,
                None,
                f"{turns} teacher turns outside [{min_turns}, {max_turns}]",
            )
        )

    tagged = any(u.phase is not None for u in teacher_utts)
    if tagged and teacher_utts and teacher_utts[-1].phase is not TeachingPhase.SUMMARIZATION:
        last_phase = teacher_utts[-1].phase
        violations.append(
            Violation(
                ViolationKind.MISSING_SUMMARIZATION,
                teacher_utts[-1].index,
                "last teacher turn has phase "
                f"{last_phase.value if last_phase else 'none'}, expected summarization",
            )
        )

    return violations
