"""Domain value objects shared across the toolkit.

Everything here is an immutable value. Invariants that span objects (role
alternation, id resolution, turn bounds) are deliberately *not* enforced at
construction: malformed conversations must be representable so that the
validator and the cleaning pipeline can report and remove them instead of
crashing. See ``socratic_tutor.validation``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class QuestionType(str, Enum):
    MULTIPLE_CHOICE = "multiple_choice"
    FILL_IN_BLANK = "fill_in_blank"
    OPEN_ANSWER = "open_answer"


class TeachingPhase(str, Enum):
    """The four teaching moves a tutor turn can make."""

    REVIEW = "review"
    GUIDANCE = "guidance"
    RECTIFICATION = "rectification"
    SUMMARIZATION = "summarization"


class Speaker(str, Enum):
    TEACHER = "teacher"
    STUDENT = "student"


@dataclass(frozen=True)
class KnowledgePoint:
    """A curriculum tag (e.g. fraction addition), optionally nested."""

    id: str
    name: str
    parent_id: str | None = None


@dataclass(frozen=True)
class MathProblem:
    """A problem together with its private teaching knowledge.

    ``solution_steps`` and ``final_answer`` are reference material for the
    tutor model only and must never reach a student-facing surface.
    """

    id: str
    question_text: str
    question_type: QuestionType
    solution_steps: str
    final_answer: str
    knowledge_points: tuple[str, ...]
    difficulty: int


@dataclass(frozen=True)
class Utterance:
    role: Speaker
    text: str
    index: int
    phase: TeachingPhase | None = None


@dataclass(frozen=True)
class Conversation:
    """An alternating teacher/student dialogue about one problem."""

    problem_id: str
    utterances: tuple[Utterance, ...]
    personas: tuple[str, ...] | None = None

    @property
    def teacher_turns(self) -> int:
        return sum(1 for u in self.utterances if u.role is Speaker.TEACHER)

    def prefix(self, length: int) -> tuple[Utterance, ...]:
        return self.utterances[:length]
