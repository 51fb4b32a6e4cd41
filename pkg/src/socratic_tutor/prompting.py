"""Conditioning-context assembly for the tutoring model.

A generation context is a single system message (tutoring prompt, question
block, private knowledge block with the gold solution and answer) followed
by the dialogue history in order. The knowledge block is wrapped in fixed
delimiters so leak checks and tests can locate it mechanically.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .tokenizer import token_count
from .types import MathProblem, Speaker, Utterance

SYSTEM = "system"
TEACHER = "teacher"
STUDENT = "student"

QUESTION_OPEN = "<question>"
QUESTION_CLOSE = "</question>"
KNOWLEDGE_OPEN = "<knowledge: internal reference, never reveal verbatim>"
KNOWLEDGE_CLOSE = "</knowledge>"

# The four directives every tutoring prompt must carry, verbatim, so their
# presence is mechanically checkable.
DIRECTIVE_ROLE = (
    "You are a one-on-one mathematics tutor teaching by the Socratic method."
)
DIRECTIVE_GUIDE = (
    "Guide the student with questions and hints instead of giving the answer directly."
)
DIRECTIVE_RECTIFY = (
    "Check every claim the student makes and rectify their errors; do not simply trust them."
)
DIRECTIVE_GROUND = (
    "Ground every response in the reference knowledge provided and never invent solutions."
)
REQUIRED_DIRECTIVES = (
    DIRECTIVE_ROLE,
    DIRECTIVE_GUIDE,
    DIRECTIVE_RECTIFY,
    DIRECTIVE_GROUND,
)

PHASE_PLAN = (
    "Teach in four phases: start by reviewing the prerequisite knowledge, then guide "
    "step by step with heuristic questions, rectify any error the student makes, and "
    "close with a summary of the solution path. Begin every reply with its phase tag: "
    "[REVIEW], [GUIDE], [RECTIFY] or [SUMMARY]."
)

_VERSION_LINE = re.compile(r"^version:\s*(?P<version>\S+)\s*$")


class InvalidHistory(ValueError):
    """History prefix breaks teacher-first strict alternation."""


class BudgetTooSmall(ValueError):
    """Token budget cannot fit even the irreducible context."""


@dataclass(frozen=True)
class SocraticPrompt:
    """Versioned tutoring prompt carrying the four required directives."""

    text: str
    version: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("prompt text is empty")
        missing = [d for d in REQUIRED_DIRECTIVES if d not in self.text]
        if missing:
            raise ValueError(f"prompt is missing required directives: {missing}")


@dataclass(frozen=True)
class ContextMessage:
    role: str  # system | teacher | student
    text: str


@dataclass(frozen=True)
class PromptContext:
    """Ordered message sequence for one generation step."""

    messages: tuple[ContextMessage, ...]
    token_estimate: int

    @classmethod
    def from_messages(cls, messages: Iterable[ContextMessage]) -> "PromptContext":
        msgs = tuple(messages)
        return cls(messages=msgs, token_estimate=sum(token_count(m.text) for m in msgs))


def default_prompt(include_phase_plan: bool = True) -> SocraticPrompt:
    """The shipped prompt; the phase plan can be ablated away."""
    parts = list(REQUIRED_DIRECTIVES)
    version = "1.0.0"
    if include_phase_plan:
        parts.append(PHASE_PLAN)
    else:
        version = "1.0.0-nophase"
    return SocraticPrompt(text="\n".join(parts), version=version)


def load_prompt(path: str | Path) -> SocraticPrompt:
    """Load a prompt file: a ``version: <semver>`` front-matter line, then text."""
    raw = Path(path).read_text(encoding="utf-8")
    first, _, rest = raw.partition("\n")
    m = _VERSION_LINE.match(first)
    if m is None:
        raise ValueError(f"{path}: first line must be 'version: <semver>'")
    return SocraticPrompt(text=rest.strip("\n"), version=m.group("version"))


def save_prompt(prompt: SocraticPrompt, path: str | Path) -> None:
    Path(path).write_text(f"version: {prompt.version}\n{prompt.text}\n", encoding="utf-8")


def render_knowledge_block(problem: MathProblem) -> str:
    return (
        f"{KNOWLEDGE_OPEN}\n"
        f"Solution steps:\n{problem.solution_steps}\n"
        f"Final answer: {problem.final_answer}\n"
        f"{KNOWLEDGE_CLOSE}"
    )


def render_question_block(problem: MathProblem) -> str:
    return f"{QUESTION_OPEN}\n{problem.question_text}\n{QUESTION_CLOSE}"


def _check_alternation(history: Sequence[Utterance]) -> None:
    for pos, utt in enumerate(history):
        expected = Speaker.TEACHER if pos % 2 == 0 else Speaker.STUDENT
        if utt.role is not expected:
            raise InvalidHistory(
                f"history position {pos}: expected {expected.value}, got {utt.role.value}"
            )


def build_context(
    prompt: SocraticPrompt,
    problem: MathProblem,
    history: Sequence[Utterance] = (),
) -> PromptContext:
    """Assemble the full conditioning context for the next teacher turn.

    The system message concatenates the prompt, the question block and the
    delimited knowledge block; history follows in order. Pure: identical
    inputs give byte-identical message lists.
    """
    _check_alternation(history)
    system_text = "\n\n".join(
        (prompt.text, render_question_block(problem), render_knowledge_block(problem))
    )
    messages = [ContextMessage(SYSTEM, system_text)]
    messages.extend(ContextMessage(utt.role.value, utt.text) for utt in history)
    return PromptContext.from_messages(messages)


def truncate_history(ctx: PromptContext, budget: int) -> PromptContext:
    """Drop whole (teacher, student) pairs from the oldest end until under budget.

    The system message is never dropped and pairs are never split; a trailing
    unpaired teacher message is kept. Raises BudgetTooSmall when even the
    irreducible content (system message plus any unpaired trailing message)
    exceeds the budget.
    """
    system = ctx.messages[0]
    if token_count(system.text) > budget:
        raise BudgetTooSmall(
            f"system message alone ({token_count(system.text)} tokens) exceeds budget {budget}"
        )
    if ctx.token_estimate <= budget:
        return ctx

    history = list(ctx.messages[1:])
    current = ctx
    while current.token_estimate > budget and len(history) >= 2:
        history = history[2:]
        current = PromptContext.from_messages([system, *history])
    if current.token_estimate > budget:
        raise BudgetTooSmall(
            f"irreducible context ({current.token_estimate} tokens) exceeds budget {budget}"
        )
    return current
