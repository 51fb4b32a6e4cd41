"""Deterministic backends for tests and offline smoke runs."""
from __future__ import annotations

from .dataset import Dataset
from .llm import CallbackBackend, ChatRequest
from .prompting import SocraticPrompt, build_context
from .types import Speaker


def gold_echo_backend(ds: Dataset, prompt: SocraticPrompt) -> CallbackBackend:
    """A backend that answers every teacher-forced context with its gold reply.

    Keyed on the exact message tuple, which is stable because context
    building is pure; safe under parallel evaluation because replies do not
    depend on call order. Requires unambiguous contexts: two conversations
    over the same problem with identical history prefixes (e.g. both first
    turns) have no single gold reply, so construction rejects them.
    """
    gold: dict[tuple[tuple[str, str], ...], str] = {}
    for conv in ds.conversations:
        problem = ds.problems[conv.problem_id]
        for pos, utt in enumerate(conv.utterances):
            if utt.role is not Speaker.TEACHER:
                continue
            context = build_context(prompt, problem, conv.utterances[:pos])
            key = tuple((m.role, m.text) for m in context.messages)
            if gold.get(key, utt.text) != utt.text:
                raise ValueError(
                    "dataset has two gold replies for one context; echo needs "
                    "conversations with distinct problems or histories"
                )
            gold[key] = utt.text

    def reply(request: ChatRequest) -> str:
        key = tuple((m.role, m.text) for m in request.messages)
        try:
            return gold[key]
        except KeyError:
            raise LookupError("request context does not match any gold turn") from None

    return CallbackBackend(reply)
