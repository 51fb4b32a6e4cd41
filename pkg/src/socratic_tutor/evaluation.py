"""Turn-by-turn evaluation protocol and rubric-based judge scoring.

Turn-wise evaluation is teacher forcing: every teacher turn is regenerated
from the gold history (gold student turns included) and scored against the
gold response with BLEU-1..4, ROUGE-1/2/L and METEOR over the shared
tokenizer. Judge scoring sends a rubric plus the dialogue context to a
grader model and parses two 1-10 scores (reliability, Socratic strategy).
"""
from __future__ import annotations

import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

from .dataset import Dataset
from .llm import ChatRequest, LLMClient, LLMError, RetryPolicy
from .prompting import ContextMessage, PromptContext, SocraticPrompt, SYSTEM, build_context
from .metrics import EmptyCandidate, EmptyReference, bleu, meteor, rouge
from .tokenizer import tokenize
from .types import Speaker

REPORT_SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class RougeScores:
    r1: float
    r2: float
    rl: float


@dataclass(frozen=True)
class TurnScore:
    conv_id: str
    turn_index: int  # 0-based teacher-turn ordinal within the conversation
    bleu: tuple[float, float, float, float]
    rouge: RougeScores
    meteor: float


@dataclass(frozen=True)
class CorpusScores:
    bleu: tuple[float, float, float, float]
    rouge: RougeScores
    meteor: float


@dataclass(frozen=True)
class TurnFailure:
    conv_id: str
    turn_index: int
    reason: str


@dataclass(frozen=True)
class MetricReport:
    per_turn: tuple[TurnScore, ...]
    corpus: CorpusScores
    n_turns: int
    n_failed: int
    failures: tuple[TurnFailure, ...] = ()


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def score_pair(candidate_text: str, reference_text: str) -> tuple[tuple[float, ...], RougeScores, float]:
    cand = tokenize(candidate_text)
    ref = tokenize(reference_text)
    b = tuple(bleu(cand, ref, 4))
    r = RougeScores(
        r1=rouge(cand, ref, "r1"), r2=rouge(cand, ref, "r2"), rl=rouge(cand, ref, "rl")
    )
    return b, r, meteor(cand, ref)


def evaluate_turnwise(
    ds: Dataset,
    prompt: SocraticPrompt,
    llm: LLMClient,
    *,
    max_new_tokens: int = 512,
    model_name: str = "default",
    retry: RetryPolicy | None = None,
) -> MetricReport:
    """Teacher-forced generation and scoring of every teacher turn.

    Generation runs at temperature 0 for reproducibility. Per-item backend
    errors and empty generations are recorded as failures and excluded from
    aggregation; aggregation order always follows input order.
    """
    tasks: list[tuple[str, int, PromptContext, str]] = []
    for ci, conv in enumerate(ds.conversations):
        problem = ds.problems[conv.problem_id]
        turn_index = 0
        for pos, utt in enumerate(conv.utterances):
            if utt.role is not Speaker.TEACHER:
                continue
            context = build_context(prompt, problem, conv.utterances[:pos])
            tasks.append((str(ci), turn_index, context, utt.text))
            turn_index += 1

    def run_one(task: tuple[str, int, PromptContext, str]):
        conv_id, turn_index, context, gold = task
        request = ChatRequest(
            messages=context.messages,
            temperature=0.0,
            max_new_tokens=max_new_tokens,
            model_name=model_name,
        )
        try:
            response = llm.complete(request, retry)
            b, r, met = score_pair(response.text, gold)
        except (LLMError, EmptyCandidate, EmptyReference) as exc:
            return TurnFailure(conv_id, turn_index, f"{type(exc).__name__}: {exc}")
        return TurnScore(conv_id, turn_index, tuple(b), r, met)

    if llm.max_parallel > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=llm.max_parallel) as pool:
            results = list(pool.map(run_one, tasks))
    else:
        results = [run_one(t) for t in tasks]

    scored = [r for r in results if isinstance(r, TurnScore)]
    failures = tuple(r for r in results if isinstance(r, TurnFailure))

    corpus = CorpusScores(
        bleu=tuple(_mean([s.bleu[k] for s in scored]) for k in range(4)),
        rouge=RougeScores(
            r1=_mean([s.rouge.r1 for s in scored]),
            r2=_mean([s.rouge.r2 for s in scored]),
            rl=_mean([s.rouge.rl for s in scored]),
        ),
        meteor=_mean([s.meteor for s in scored]),
    )
    return MetricReport(
        per_turn=tuple(scored),
        corpus=corpus,
        n_turns=len(scored),
        n_failed=len(failures),
        failures=failures,
    )


def report_to_json(report: MetricReport) -> dict[str, Any]:
    def rouge_json(r: RougeScores) -> dict[str, float]:
        return {"r1": r.r1, "r2": r.r2, "rl": r.rl}

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_turns": report.n_turns,
        "n_failed": report.n_failed,
        "corpus": {
            "bleu": list(report.corpus.bleu),
            "rouge": rouge_json(report.corpus.rouge),
            "meteor": report.corpus.meteor,
        },
        "per_turn": [
            {
                "conv_id": s.conv_id,
                "turn_index": s.turn_index,
                "bleu": list(s.bleu),
                "rouge": rouge_json(s.rouge),
                "meteor": s.meteor,
            }
            for s in report.per_turn
        ],
        "failures": [
            {"conv_id": f.conv_id, "turn_index": f.turn_index, "reason": f.reason}
            for f in report.failures
        ],
    }


# --------------------------------------------------------------------------
# judge scoring


class JudgeParseError(RuntimeError):
    pass


ANSWER_FORMAT = "reliability: <1-10>, socratic: <1-10>"

RUBRIC_VERSION = "1.0.0"

DEFAULT_RUBRIC = f"""\
[rubric v{RUBRIC_VERSION}]
You are grading one tutor reply from a mathematics tutoring dialogue.

Score two criteria, each an integer from 1 to 10:
- reliability: does the reply correct the student's errors precisely and
  stay factually right about the mathematics?
- socratic: does the reply guide and inspire the student to reason for
  themselves instead of handing over answers?

Dialogue context:
{{context}}

Tutor reply to grade:
{{candidate}}

{{reference_section}}
Answer on one line, exactly in this format:
{ANSWER_FORMAT}
"""

_SCORE_RE = re.compile(
    r"reliability\s*[:：]\s*(?P<rel>\d+(?:\.\d+)?).*?socratic\s*[:：]\s*(?P<soc>\d+(?:\.\d+)?)",
    re.IGNORECASE | re.DOTALL,
)


@dataclass(frozen=True)
class JudgeScore:
    reliability: float
    socratic: float
    rationale: str


def render_context_transcript(context: PromptContext) -> str:
    return "\n".join(f"{m.role}: {m.text}" for m in context.messages)


def _validate_rubric(rubric: str) -> None:
    lowered = rubric.lower()
    for needle in ("reliability", "socratic", "{context}", "{candidate}"):
        if needle not in lowered:
            raise ValueError(f"rubric template must contain {needle!r}")
    if ANSWER_FORMAT not in rubric:
        raise ValueError("rubric template must state the machine-parseable answer format")


def _parse_judge_reply(text: str) -> JudgeScore | None:
    m = _SCORE_RE.search(text)
    if m is None:
        return None
    rel, soc = float(m.group("rel")), float(m.group("soc"))
    if not (1 <= rel <= 10 and 1 <= soc <= 10):
        return None
    return JudgeScore(reliability=rel, socratic=soc, rationale=text.strip())


def judge_scores(
    candidate: str,
    context: PromptContext,
    rubric: str,
    llm: LLMClient,
    *,
    reference: str | None = None,
    model_name: str = "judge",
    retry: RetryPolicy | None = None,
) -> JudgeScore:
    """Grade one candidate reply; re-asks once on an unparseable verdict."""
    _validate_rubric(rubric)
    reference_section = (
        f"Gold reference reply (for comparison):\n{reference}\n" if reference else ""
    )
    filled = rubric.format(
        context=render_context_transcript(context),
        candidate=candidate,
        reference_section=reference_section,
    )
    request = ChatRequest(
        messages=(ContextMessage(SYSTEM, filled),),
        temperature=0.0,
        max_new_tokens=512,
        model_name=model_name,
    )
    response = llm.complete(request, retry)
    parsed = _parse_judge_reply(response.text)
    if parsed is not None:
        return parsed

    strict = filled + "\nYour previous reply was unparseable. Answer ONLY with the format line."
    retry_request = ChatRequest(
        messages=(ContextMessage(SYSTEM, strict),),
        temperature=0.0,
        max_new_tokens=512,
        model_name=model_name,
    )
    response = llm.complete(retry_request, retry)
    parsed = _parse_judge_reply(response.text)
    if parsed is None:
        raise JudgeParseError(f"judge reply unparseable after retry: {response.text[:200]!r}")
    return parsed


@dataclass(frozen=True)
class JudgeReport:
    scores: tuple[JudgeScore, ...]
    mean_reliability: float
    mean_socratic: float
    n_samples: int
    n_failed: int


def judge_turnwise(
    ds: Dataset,
    prompt: SocraticPrompt,
    candidates: Sequence[tuple[str, int, str]],
    rubric: str,
    llm: LLMClient,
    *,
    with_reference: bool = True,
    retry: RetryPolicy | None = None,
) -> JudgeReport:
    """Judge (conv_id, turn_index, candidate) triples against gold contexts."""
    contexts: dict[tuple[str, int], tuple[PromptContext, str]] = {}
    for ci, conv in enumerate(ds.conversations):
        problem = ds.problems[conv.problem_id]
        turn_index = 0
        for pos, utt in enumerate(conv.utterances):
            if utt.role is not Speaker.TEACHER:
                continue
            contexts[(str(ci), turn_index)] = (
                build_context(prompt, problem, conv.utterances[:pos]),
                utt.text,
            )
            turn_index += 1

    scores: list[JudgeScore] = []
    n_failed = 0
    for conv_id, turn_index, candidate in candidates:
        context, gold = contexts[(conv_id, turn_index)]
        try:
            scores.append(
                judge_scores(
                    candidate,
                    context,
                    rubric,
                    llm,
                    reference=gold if with_reference else None,
                    retry=retry,
                )
            )
        except (LLMError, JudgeParseError):
            n_failed += 1
    return JudgeReport(
        scores=tuple(scores),
        mean_reliability=_mean([s.reliability for s in scores]),
        mean_socratic=_mean([s.socratic for s in scores]),
        n_samples=len(scores),
        n_failed=n_failed,
    )


def sample_turns(ds: Dataset, n: int, seed: int) -> list[tuple[str, int, str]]:
    """Seeded uniform sample of (conv_id, turn_index, gold_text) triples."""
    pool: list[tuple[str, int, str]] = []
    for ci, conv in enumerate(ds.conversations):
        turn_index = 0
        for utt in conv.utterances:
            if utt.role is not Speaker.TEACHER:
                continue
            pool.append((str(ci), turn_index, utt.text))
            turn_index += 1
    rng = random.Random(seed)
    if n >= len(pool):
        return pool
    return rng.sample(pool, n)
