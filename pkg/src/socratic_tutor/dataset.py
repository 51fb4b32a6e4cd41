"""Conversation-dataset toolkit.

Loading and validation of the canonical JSON format (schema v1, see
docs/dataset_schema.md), corpus statistics, deterministic splitting,
model-driven pre-annotation of candidate dialogues, cleaning filters, and
export of per-turn training examples.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .llm import ChatRequest, LLMClient, LLMError, RetryPolicy
from .orchestrator import parse_phase_tag
from .prompting import ContextMessage, PromptContext, SocraticPrompt, SYSTEM, build_context
from .tokenizer import token_count
from .types import (
    Conversation,
    KnowledgePoint,
    MathProblem,
    QuestionType,
    Speaker,
    TeachingPhase,
    Utterance,
)
from .validation import validate_conversation

SCHEMA_VERSION = "1"

SPLIT_TAGS = ("train", "dev", "test")


class DatasetError(Exception):
    """Base for dataset load failures; carries the full violation list."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SchemaError(DatasetError):
    pass


class BrokenReferenceError(DatasetError):
    pass


class RatioError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    problems: dict[str, MathProblem]
    knowledge_points: dict[str, KnowledgePoint]
    conversations: tuple[Conversation, ...]
    split_tag: str | None = None


@dataclass(frozen=True)
class DatasetStats:
    """Corpus statistics; "word" counts use the toolkit tokenizer
    (character-level for Chinese), averaged over conversations."""

    n_conv: int
    turns_per_conv: float
    words_per_solution: float
    words_per_utterance: float
    n_kg: int
    kg_per_conv: float


@dataclass(frozen=True)
class LossMask:
    """Token span bearing loss: exactly the target tokens, never context."""

    start: int
    length: int


@dataclass(frozen=True)
class TrainingExample:
    context: PromptContext
    target: str
    loss_mask: LossMask


@dataclass(frozen=True)
class CleaningReport:
    n_input: int
    n_deleted: int
    n_modified: int
    reasons: dict[str, int]


# --------------------------------------------------------------------------
# load / serialize


def _check_str(value: Any, path: str, errs: list[str], *, nonempty: bool = True) -> str:
    if not isinstance(value, str):
        errs.append(f"{path}: expected string, got {type(value).__name__}")
        return ""
    if nonempty and not value.strip():
        errs.append(f"{path}: must be non-empty")
    return value


def _flag_unknown(obj: Mapping[str, Any], allowed: set[str], path: str, errs: list[str]) -> None:
    for key in obj:
        if key not in allowed:
            errs.append(f"{path}.{key}: unknown field")


def _parse_knowledge_point(obj: Any, path: str, errs: list[str]) -> KnowledgePoint | None:
    if not isinstance(obj, dict):
        errs.append(f"{path}: expected object")
        return None
    _flag_unknown(obj, {"id", "name", "parent_id"}, path, errs)
    kp_id = _check_str(obj.get("id"), f"{path}.id", errs)
    name = _check_str(obj.get("name"), f"{path}.name", errs)
    parent = obj.get("parent_id")
    if parent is not None and not isinstance(parent, str):
        errs.append(f"{path}.parent_id: expected string or null")
        parent = None
    return KnowledgePoint(id=kp_id, name=name, parent_id=parent)


def _parse_problem(obj: Any, path: str, errs: list[str]) -> MathProblem | None:
    if not isinstance(obj, dict):
        errs.append(f"{path}: expected object")
        return None
    allowed = {
        "id",
        "question_text",
        "question_type",
        "solution_steps",
        "final_answer",
        "knowledge_points",
        "difficulty",
    }
    _flag_unknown(obj, allowed, path, errs)
    pid = _check_str(obj.get("id"), f"{path}.id", errs)
    question = _check_str(obj.get("question_text"), f"{path}.question_text", errs)
    solution = _check_str(obj.get("solution_steps"), f"{path}.solution_steps", errs)
    answer = _check_str(obj.get("final_answer"), f"{path}.final_answer", errs)

    qtype_raw = obj.get("question_type")
    try:
        qtype = QuestionType(qtype_raw)
    except ValueError:
        errs.append(f"{path}.question_type: {qtype_raw!r} not one of "
                    f"{[t.value for t in QuestionType]}")
        qtype = QuestionType.OPEN_ANSWER

    kps_raw = obj.get("knowledge_points")
    kps: tuple[str, ...] = ()
    if not isinstance(kps_raw, list) or not kps_raw:
        errs.append(f"{path}.knowledge_points: expected non-empty list")
    else:
        kps = tuple(str(k) for k in kps_raw)
        if len(set(kps)) != len(kps):
            errs.append(f"{path}.knowledge_points: duplicate ids")

    difficulty = obj.get("difficulty")
    if not isinstance(difficulty, int) or isinstance(difficulty, bool) or not 1 <= difficulty <= 5:
        errs.append(f"{path}.difficulty: expected integer in 1..5, got {difficulty!r}")
        difficulty = 1

    return MathProblem(
        id=pid,
        question_text=question,
        question_type=qtype,
        solution_steps=solution,
        final_answer=answer,
        knowledge_points=kps,
        difficulty=difficulty,
    )


def _parse_conversation(obj: Any, path: str, errs: list[str]) -> Conversation | None:
    if not isinstance(obj, dict):
        errs.append(f"{path}: expected object")
        return None
    _flag_unknown(obj, {"problem_id", "persona", "utterances"}, path, errs)
    pid = _check_str(obj.get("problem_id"), f"{path}.problem_id", errs)

    persona_raw = obj.get("persona")
    personas: tuple[str, ...] | None
    if persona_raw is None:
        personas = None
    elif isinstance(persona_raw, str):
        personas = (persona_raw,)
    elif isinstance(persona_raw, list) and all(isinstance(p, str) for p in persona_raw):
        personas = tuple(persona_raw)
    else:
        errs.append(f"{path}.persona: expected string, list of strings, or null")
        personas = None

    utts_raw = obj.get("utterances")
    utterances: list[Utterance] = []
    if not isinstance(utts_raw, list):
        errs.append(f"{path}.utterances: expected list")
    else:
        for i, u in enumerate(utts_raw):
            upath = f"{path}.utterances[{i}]"
            if not isinstance(u, dict):
                errs.append(f"{upath}: expected object")
                continue
            _flag_unknown(u, {"role", "text", "phase"}, upath, errs)
            role_raw = u.get("role")
            try:
                role = Speaker(role_raw)
            except ValueError:
                errs.append(f"{upath}.role: {role_raw!r} not one of ['teacher', 'student']")
                role = Speaker.TEACHER
            text = _check_str(u.get("text"), f"{upath}.text", errs)
            phase_raw = u.get("phase")
            phase = None
            if phase_raw is not None:
                try:
                    phase = TeachingPhase(phase_raw)
                except ValueError:
                    errs.append(
                        f"{upath}.phase: {phase_raw!r} not one of "
                        f"{[p.value for p in TeachingPhase]}"
                    )
            utterances.append(Utterance(role=role, text=text, index=i, phase=phase))

    return Conversation(problem_id=pid, utterances=tuple(utterances), personas=personas)


def parse_dataset(data: Any) -> Dataset:
    """Validate raw JSON data into a Dataset; total, all violations at once."""
    schema_errs: list[str] = []
    if not isinstance(data, dict):
        raise SchemaError(["$: top level must be an object"])
    _flag_unknown(
        data,
        {"schema_version", "knowledge_points", "problems", "conversations", "split_tag"},
        "$",
        schema_errs,
    )
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        schema_errs.append(f"$.schema_version: expected {SCHEMA_VERSION!r}, got {version!r}")

    split_tag = data.get("split_tag")
    if split_tag is not None and split_tag not in SPLIT_TAGS:
        schema_errs.append(f"$.split_tag: {split_tag!r} not one of {list(SPLIT_TAGS)}")

    kps: dict[str, KnowledgePoint] = {}
    for i, obj in enumerate(data.get("knowledge_points") or []):
        kp = _parse_knowledge_point(obj, f"$.knowledge_points[{i}]", schema_errs)
        if kp is None:
            continue
        if kp.id in kps:
            schema_errs.append(f"$.knowledge_points[{i}].id: duplicate id {kp.id!r}")
        kps[kp.id] = kp

    problems: dict[str, MathProblem] = {}
    for i, obj in enumerate(data.get("problems") or []):
        prob = _parse_problem(obj, f"$.problems[{i}]", schema_errs)
        if prob is None:
            continue
        if prob.id in problems:
            schema_errs.append(f"$.problems[{i}].id: duplicate id {prob.id!r}")
        problems[prob.id] = prob

    conversations: list[Conversation] = []
    for i, obj in enumerate(data.get("conversations") or []):
        conv = _parse_conversation(obj, f"$.conversations[{i}]", schema_errs)
        if conv is not None:
            conversations.append(conv)

    if schema_errs:
        raise SchemaError(schema_errs)

    ref_errs: list[str] = []
    for kp in kps.values():
        if kp.parent_id is not None and kp.parent_id not in kps:
            ref_errs.append(f"knowledge_point {kp.id!r}: unknown parent_id {kp.parent_id!r}")
    for kp in kps.values():  # cycle check via parent chain walk
        seen = {kp.id}
        cur = kp
        while cur.parent_id is not None and cur.parent_id in kps:
            if cur.parent_id in seen:
                ref_errs.append(f"knowledge_point {kp.id!r}: parent cycle")
                break
            seen.add(cur.parent_id)
            cur = kps[cur.parent_id]
    for prob in problems.values():
        for kid in prob.knowledge_points:
            if kid not in kps:
                ref_errs.append(f"problem {prob.id!r}: unknown knowledge_point {kid!r}")
    for i, conv in enumerate(conversations):
        if conv.problem_id not in problems:
            ref_errs.append(f"conversation [{i}]: unknown problem_id {conv.problem_id!r}")
    if ref_errs:
        raise BrokenReferenceError(ref_errs)

    return Dataset(
        problems=problems,
        knowledge_points=kps,
        conversations=tuple(conversations),
        split_tag=split_tag,
    )


def load_dataset(path: str | Path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError([f"$: invalid JSON: {exc}"]) from exc
    return parse_dataset(data)


def dataset_to_json(ds: Dataset) -> dict[str, Any]:
    def conv_json(conv: Conversation) -> dict[str, Any]:
        obj: dict[str, Any] = {"problem_id": conv.problem_id}
        if conv.personas is not None:
            obj["persona"] = conv.personas[0] if len(conv.personas) == 1 else list(conv.personas)
        obj["utterances"] = [
            {
                "role": u.role.value,
                "text": u.text,
                **({"phase": u.phase.value} if u.phase is not None else {}),
            }
            for u in conv.utterances
        ]
        return obj

    out: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "knowledge_points": [
            {
                "id": kp.id,
                "name": kp.name,
                **({"parent_id": kp.parent_id} if kp.parent_id is not None else {}),
            }
            for kp in ds.knowledge_points.values()
        ],
        "problems": [
            {
                "id": p.id,
                "question_text": p.question_text,
                "question_type": p.question_type.value,
                "solution_steps": p.solution_steps,
                "final_answer": p.final_answer,
                "knowledge_points": list(p.knowledge_points),
                "difficulty": p.difficulty,
            }
            for p in ds.problems.values()
        ],
        "conversations": [conv_json(c) for c in ds.conversations],
    }
    if ds.split_tag is not None:
        out["split_tag"] = ds.split_tag
    return out


def save_dataset(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_json(ds), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


# --------------------------------------------------------------------------
# statistics


def compute_stats(ds: Dataset) -> DatasetStats:
    n_conv = len(ds.conversations)
    if n_conv == 0:
        return DatasetStats(0, 0.0, 0.0, 0.0, 0, 0.0)

    total_turns = sum(c.teacher_turns for c in ds.conversations)
    solution_words = [
        token_count(ds.problems[c.problem_id].solution_steps) for c in ds.conversations
    ]
    utterance_words = [
        token_count(u.text) for c in ds.conversations for u in c.utterances
    ]
    referenced = {
        kid for c in ds.conversations for kid in ds.problems[c.problem_id].knowledge_points
    }
    kg_counts = [len(ds.problems[c.problem_id].knowledge_points) for c in ds.conversations]

    return DatasetStats(
        n_conv=n_conv,
        turns_per_conv=total_turns / n_conv,
        words_per_solution=sum(solution_words) / n_conv,
        words_per_utterance=(
            sum(utterance_words) / len(utterance_words) if utterance_words else 0.0
        ),
        n_kg=len(referenced),
        kg_per_conv=sum(kg_counts) / n_conv,
    )


# --------------------------------------------------------------------------
# splitting


def split_dataset(
    ds: Dataset, ratios: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic seeded shuffle into train/dev/test partitions.

    Dev and test sizes are the rounded ratios; train takes the remainder,
    so the three parts always partition the input exactly.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise RatioError(f"ratios must be three non-negative numbers, got {ratios!r}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioError(f"ratios must sum to 1, got {sum(ratios)!r}")

    n = len(ds.conversations)
    order = list(range(n))
    random.Random(seed).shuffle(order)

    n_dev = round(n * ratios[1])
    n_test = round(n * ratios[2])
    n_train = n - n_dev - n_test
    if n_train < 0:
        raise RatioError("rounded dev/test sizes exceed the dataset")

    def subset(indices: list[int], tag: str) -> Dataset:
        return Dataset(
            problems=ds.problems,
            knowledge_points=ds.knowledge_points,
            conversations=tuple(ds.conversations[i] for i in indices),
            split_tag=tag,
        )

    train = subset(order[:n_train], "train")
    dev = subset(order[n_train : n_train + n_dev], "dev")
    test = subset(order[n_train + n_dev :], "test")
    return train, dev, test


# --------------------------------------------------------------------------
# pre-annotation


EXAMPLE_OPEN = "<example>"
EXAMPLE_CLOSE = "</example>"

DEFAULT_PREANNOTATION_TEMPLATE = """\
You are a Socratic mathematics teacher role-playing a full tutoring dialogue
with a primary-school student. Guide with questions, never hand over the
answer, correct mistakes, and end by summarizing. The student should behave
in a {persona} way. Write the dialogue as alternating lines starting with
"Teacher:" and "Student:"; begin each teacher line with its phase tag
([REVIEW], [GUIDE], [RECTIFY] or [SUMMARY]).

One worked example of the expected format:
<example>
Teacher: [REVIEW] Let's recall how to add fractions. What do we need first?
Student: A common denominator?
Teacher: [GUIDE] Right. What is the common denominator of 1/2 and 1/3?
Student: 6!
Teacher: [SUMMARY] Exactly. We rewrite both fractions over 6 and add to get 5/6.
</example>

Now write a new dialogue for this problem.
Question: {question}
Reference solution (private, never reveal verbatim): {solution}
Final answer (private): {answer}
"""

_TEACHER_PREFIXES = ("teacher:", "teacher：", "老师:", "老师：", "教师:", "教师：")
_STUDENT_PREFIXES = ("student:", "student：", "学生:", "学生：")


@dataclass(frozen=True)
class PreannotationFailure:
    problem_id: str
    reason: str
    raw_text: str = ""


@dataclass(frozen=True)
class PreannotationResult:
    conversations: tuple[Conversation, ...]
    failures: tuple[PreannotationFailure, ...]


def _validate_template(template: str) -> None:
    if template.count(EXAMPLE_OPEN) != 1 or template.count(EXAMPLE_CLOSE) != 1:
        raise ValueError("template must contain exactly one worked example block")
    for placeholder in ("{persona}", "{question}", "{solution}", "{answer}"):
        if placeholder not in template:
            raise ValueError(f"template is missing the {placeholder} placeholder")


def _strip_markdown(line: str) -> str:
    line = line.strip()
    for lead in ("- ", "* ", "> "):
        if line.startswith(lead):
            line = line[len(lead):].strip()
    return line.replace("**", "").strip("` ")


def parse_dialogue(text: str) -> list[tuple[Speaker, str]] | None:
    """Parse a role-played dialogue into (speaker, text) turns.

    Lines without a speaker prefix continue the current turn; consecutive
    lines from the same speaker are merged. Returns None when the text has
    no teacher-opened exchange with at least one student turn.
    """
    turns: list[tuple[Speaker, str]] = []
    for raw_line in text.splitlines():
        line = _strip_markdown(raw_line)
        if not line:
            continue
        lowered = line.lower()
        speaker: Speaker | None = None
        for prefix in _TEACHER_PREFIXES:
            if lowered.startswith(prefix):
                speaker, line = Speaker.TEACHER, line[len(prefix):].strip()
                break
        if speaker is None:
            for prefix in _STUDENT_PREFIXES:
                if lowered.startswith(prefix):
                    speaker, line = Speaker.STUDENT, line[len(prefix):].strip()
                    break
        if speaker is None:
            if turns and line:
                prev_speaker, prev_text = turns[-1]
                turns[-1] = (prev_speaker, f"{prev_text}\n{line}")
            continue
        if not line:
            continue
        if turns and turns[-1][0] is speaker:
            prev_speaker, prev_text = turns[-1]
            turns[-1] = (prev_speaker, f"{prev_text}\n{line}")
        else:
            turns.append((speaker, line))

    if not turns or turns[0][0] is not Speaker.TEACHER:
        return None
    if not any(s is Speaker.STUDENT for s, _ in turns):
        return None
    return turns


def _conversation_from_turns(
    problem_id: str, turns: list[tuple[Speaker, str]], persona: str
) -> Conversation:
    utterances = []
    for i, (speaker, text) in enumerate(turns):
        phase = parse_phase_tag(text) if speaker is Speaker.TEACHER else None
        utterances.append(Utterance(role=speaker, text=text, index=i, phase=phase))
    return Conversation(
        problem_id=problem_id, utterances=tuple(utterances), personas=(persona,)
    )


def preannotate(
    problems: Sequence[MathProblem],
    personas: Sequence[str],
    template: str,
    llm: LLMClient,
    *,
    seed: int = 0,
    max_new_tokens: int = 2048,
    model_name: str = "default",
    retry: RetryPolicy | None = None,
) -> PreannotationResult:
    """Generate one candidate dialogue per problem with sampled personas.

    Personas are assigned up front from a seeded RNG (uniform per problem),
    so the assignment is reproducible regardless of backend behavior.
    Backend errors and unparseable outputs become failure records; the
    batch always continues.
    """
    _validate_template(template)
    if not personas:
        raise ValueError("personas must be non-empty")
    rng = random.Random(seed)
    assigned = [rng.choice(list(personas)) for _ in problems]

    conversations: list[Conversation] = []
    failures: list[PreannotationFailure] = []
    from concurrent.futures import ThreadPoolExecutor

    def run_one(idx: int) -> tuple[int, Conversation | None, PreannotationFailure | None]:
        problem = problems[idx]
        persona = assigned[idx]
        prompt_text = template.format(
            persona=persona,
            question=problem.question_text,
            solution=problem.solution_steps,
            answer=problem.final_answer,
        )
        request = ChatRequest(
            messages=(ContextMessage(SYSTEM, prompt_text),),
            temperature=0.7,
            max_new_tokens=max_new_tokens,
            model_name=model_name,
        )
        try:
            response = llm.complete(request, retry)
        except LLMError as exc:
            return idx, None, PreannotationFailure(problem.id, f"backend: {exc}")
        turns = parse_dialogue(response.text)
        if turns is None:
            return idx, None, PreannotationFailure(
                problem.id, "unparseable dialogue", response.text
            )
        return idx, _conversation_from_turns(problem.id, turns, persona), None

    with ThreadPoolExecutor(max_workers=llm.max_parallel) as pool:
        results = list(pool.map(run_one, range(len(problems))))

    for _, conv, failure in sorted(results, key=lambda r: r[0]):
        if conv is not None:
            conversations.append(conv)
        if failure is not None:
            failures.append(failure)
    return PreannotationResult(tuple(conversations), tuple(failures))


# --------------------------------------------------------------------------
# cleaning


def clean_candidates(
    convs: Sequence[Conversation], min_turns: int, max_turns: int
) -> tuple[list[Conversation], CleaningReport]:
    """Drop candidates with out-of-range turn counts or broken invariants."""
    if min_turns < 1 or max_turns < min_turns:
        raise ValueError("need 1 <= min_turns <= max_turns")
    kept: list[Conversation] = []
    reasons: Counter[str] = Counter()
    for conv in convs:
        turns = conv.teacher_turns
        if turns < min_turns:
            reasons["TooFewTurns"] += 1
            continue
        if turns > max_turns:
            reasons["TooManyTurns"] += 1
            continue
        if validate_conversation(conv, None, min_turns=min_turns, max_turns=max_turns):
            reasons["Invalid"] += 1
            continue
        kept.append(conv)
    report = CleaningReport(
        n_input=len(convs),
        n_deleted=len(convs) - len(kept),
        n_modified=0,
        reasons=dict(reasons),
    )
    return kept, report


# --------------------------------------------------------------------------
# training export


def export_training(ds: Dataset, prompt: SocraticPrompt) -> list[TrainingExample]:
    """One example per teacher turn: context is the gold history before it.

    The loss mask covers exactly the target's tokens (offsets counted after
    the context tokens), so downstream training never spends loss on the
    prompt, question, knowledge or history.
    """
    examples: list[TrainingExample] = []
    for conv in ds.conversations:
        problem = ds.problems[conv.problem_id]
        for pos, utt in enumerate(conv.utterances):
            if utt.role is not Speaker.TEACHER:
                continue
            context = build_context(prompt, problem, conv.utterances[:pos])
            examples.append(
                TrainingExample(
                    context=context,
                    target=utt.text,
                    loss_mask=LossMask(
                        start=context.token_estimate, length=token_count(utt.text)
                    ),
                )
            )
    return examples


def training_example_to_json(example: TrainingExample) -> dict[str, Any]:
    return {
        "context": {
            "messages": [
                {"role": m.role, "text": m.text} for m in example.context.messages
            ],
            "token_estimate": example.context.token_estimate,
        },
        "target": example.target,
        "loss_mask": {"start": example.loss_mask.start, "length": example.loss_mask.length},
    }
