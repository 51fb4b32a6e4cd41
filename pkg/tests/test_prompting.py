from __future__ import annotations

import pytest

from socratic_tutor.prompting import (
    BudgetTooSmall,
    ContextMessage,
    InvalidHistory,
    KNOWLEDGE_CLOSE,
    KNOWLEDGE_OPEN,
    PromptContext,
    QUESTION_OPEN,
    REQUIRED_DIRECTIVES,
    SocraticPrompt,
    build_context,
    default_prompt,
    load_prompt,
    save_prompt,
    truncate_history,
)
from socratic_tutor.tokenizer import token_count
from socratic_tutor.types import Speaker, Utterance

from helpers import make_conversation, make_problem


def test_empty_history_single_system_message_with_blocks(problem):
    ctx = build_context(default_prompt(), problem)
    assert len(ctx.messages) == 1
    system = ctx.messages[0]
    assert system.role == "system"
    assert QUESTION_OPEN in system.text
    assert problem.question_text in system.text
    knowledge = system.text.split(KNOWLEDGE_OPEN, 1)[1].split(KNOWLEDGE_CLOSE, 1)[0]
    assert problem.solution_steps in knowledge
    assert problem.final_answer in knowledge
    assert system.text.startswith(default_prompt().text)


def test_history_pair_gives_three_ordered_messages(problem):
    conv = make_conversation(problem.id, n_teacher=2)
    ctx = build_context(default_prompt(), problem, conv.utterances[:2])
    assert [m.role for m in ctx.messages] == ["system", "teacher", "student"]
    assert ctx.messages[1].text == conv.utterances[0].text
    assert ctx.messages[2].text == conv.utterances[1].text


def test_token_estimate_matches_independent_sum(problem):
    conv = make_conversation(problem.id, n_teacher=4)
    ctx = build_context(default_prompt(), problem, conv.utterances[:5])
    assert ctx.token_estimate == sum(token_count(m.text) for m in ctx.messages)


def test_build_context_is_pure(problem):
    conv = make_conversation(problem.id, n_teacher=3)
    a = build_context(default_prompt(), problem, conv.utterances[:3])
    b = build_context(default_prompt(), problem, conv.utterances[:3])
    assert a == b
    assert a.messages == b.messages


def test_invalid_history_rejected(problem):
    student_first = (Utterance(Speaker.STUDENT, "hi", index=0),)
    with pytest.raises(InvalidHistory):
        build_context(default_prompt(), problem, student_first)
    doubled = (
        Utterance(Speaker.TEACHER, "a", index=0),
        Utterance(Speaker.TEACHER, "b", index=1),
    )
    with pytest.raises(InvalidHistory):
        build_context(default_prompt(), problem, doubled)


def _pair_history(n_pairs: int) -> list[ContextMessage]:
    msgs = []
    for i in range(n_pairs):
        msgs.append(ContextMessage("teacher", f"t{i}"))  # 2 tokens each: t, i
        msgs.append(ContextMessage("student", f"s{i}"))
    return msgs


def test_truncate_noop_under_budget(problem):
    ctx = build_context(default_prompt(), problem)
    assert truncate_history(ctx, ctx.token_estimate) is ctx


def test_truncate_drops_oldest_pairs_keeps_newest():
    system = ContextMessage("system", "sys prompt words here")
    history = _pair_history(5)
    ctx = PromptContext.from_messages([system, *history])
    sys_tokens = token_count(system.text)
    budget = sys_tokens + 4 * 2  # room for exactly 2 (teacher, student) pairs
    out = truncate_history(ctx, budget)
    assert [m.text for m in out.messages] == [system.text, "t3", "s3", "t4", "s4"]
    assert out.token_estimate <= budget
    # parity and final utterance preserved
    assert out.messages[-1].text == ctx.messages[-1].text
    assert [m.role for m in out.messages[1:]] == ["teacher", "student"] * 2


def test_truncate_never_splits_pair_or_drops_trailing_teacher():
    system = ContextMessage("system", "sys")
    history = [*_pair_history(2), ContextMessage("teacher", "tlast")]
    ctx = PromptContext.from_messages([system, *history])
    budget = token_count("sys") + token_count("tlast") + 4
    out = truncate_history(ctx, budget)
    assert [m.text for m in out.messages] == ["sys", "t1", "s1", "tlast"]


def test_budget_below_system_message_raises(problem):
    ctx = build_context(default_prompt(), problem)
    with pytest.raises(BudgetTooSmall):
        truncate_history(ctx, 3)


def test_budget_below_irreducible_trailing_teacher_raises():
    system = ContextMessage("system", "sys")
    ctx = PromptContext.from_messages(
        [system, ContextMessage("teacher", "one two three four five")]
    )
    with pytest.raises(BudgetTooSmall):
        truncate_history(ctx, token_count("sys") + 2)


def test_prompt_requires_all_directives():
    with pytest.raises(ValueError):
        SocraticPrompt(text="be nice", version="1")
    text_missing_one = "\n".join(REQUIRED_DIRECTIVES[:-1])
    with pytest.raises(ValueError):
        SocraticPrompt(text=text_missing_one, version="1")
    assert default_prompt().version == "1.0.0"
    assert default_prompt(include_phase_plan=False).version == "1.0.0-nophase"


def test_phase_plan_ablation_flag():
    assert "[REVIEW]" in default_prompt().text
    assert "[REVIEW]" not in default_prompt(include_phase_plan=False).text


def test_prompt_file_round_trip(tmp_path):
    path = tmp_path / "prompt.txt"
    save_prompt(default_prompt(), path)
    loaded = load_prompt(path)
    assert loaded == default_prompt()
    assert path.read_text(encoding="utf-8").startswith("version: 1.0.0\n")


def test_prompt_file_requires_version_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("no front matter", encoding="utf-8")
    with pytest.raises(ValueError):
        load_prompt(path)


def test_k_presence_across_random_problems():
    for i in range(20):
        problem = make_problem(f"p{i}", answer=f"{i}/7", solution=f"步骤{i} 乘以 7")
        ctx = build_context(default_prompt(), problem)
        body = ctx.messages[0].text
        block = body.split(KNOWLEDGE_OPEN, 1)[1].split(KNOWLEDGE_CLOSE, 1)[0]
        assert problem.solution_steps in block
        assert problem.final_answer in block
