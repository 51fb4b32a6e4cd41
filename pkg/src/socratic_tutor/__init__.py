"""Socratic mathematics tutoring engine, dataset toolkit and eval harness."""

from .answers import NormalizedAnswer, normalize_answer
from .orchestrator import (
    AnswerCheck,
    SessionConfig,
    SessionState,
    SessionStatus,
    advance,
    check_answer,
    classify_phase,
    start_session,
)
from .prompting import (
    PromptContext,
    SocraticPrompt,
    build_context,
    default_prompt,
    truncate_history,
)
from .tokenizer import tokenize
from .types import (
    Conversation,
    KnowledgePoint,
    MathProblem,
    QuestionType,
    Speaker,
    TeachingPhase,
    Utterance,
)
from .validation import Violation, ViolationKind, validate_conversation

__version__ = "0.1.0"

__all__ = [
    "AnswerCheck",
    "Conversation",
    "KnowledgePoint",
    "MathProblem",
    "NormalizedAnswer",
    "PromptContext",
    "QuestionType",
    "SessionConfig",
    "SessionState",
    "SessionStatus",
    "SocraticPrompt",
    "Speaker",
    "TeachingPhase",
    "Utterance",
    "Violation",
    "ViolationKind",
    "advance",
    "build_context",
    "check_answer",
    "classify_phase",
    "default_prompt",
    "normalize_answer",
    "start_session",
    "tokenize",
    "truncate_history",
    "validate_conversation",
]
