"""Independent oracles and fixture factories shared by the test suite.

The oracles deliberately re-derive results through different algorithms
than the implementations they check (regex scan vs state machine, full
enumeration vs branch-and-bound, recursive LCS vs iterative DP).
"""
from __future__ import annotations

import random
import re
from collections import Counter
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

from socratic_tutor.types import (
    Conversation,
    KnowledgePoint,
    MathProblem,
    QuestionType,
    Speaker,
    TeachingPhase,
    Utterance,
)
from socratic_tutor.dataset import Dataset

# --------------------------------------------------------------------------
# tokenizer oracle: one regex pass instead of a character state machine

_ORACLE_TOKEN_RE = re.compile(
    r"[㐀-䶿一-鿿豈-﫿\U00020000-\U0002ebef\U0002f800-\U0002fa1f]"
    r"|[A-Za-zÀ-ÖØ-öø-ɏ]+"
    r"|[0-9]+"
)


def oracle_tokenize(text: str) -> list[str]:
    # lower() is the identity on CJK chars and digits, so it is safe to
    # apply uniformly; only Latin runs actually change.
    return [t.lower() for t in _ORACLE_TOKEN_RE.findall(text)]


# --------------------------------------------------------------------------
# LCS oracle: top-down recursion with memo

def oracle_lcs(a: Sequence[str], b: Sequence[str]) -> int:
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + rec(i + 1, j + 1)
        return max(rec(i + 1, j), rec(i, j + 1))

    return rec(0, 0)


# --------------------------------------------------------------------------
# METEOR oracle: enumerate every maximum matching, take the fewest chunks

def _chunks_of(pairs: list[tuple[int, int]]) -> int:
    pairs = sorted(pairs)
    chunks = 0
    prev: tuple[int, int] | None = None
    for i, j in pairs:
        if prev is None or (i, j) != (prev[0] + 1, prev[1] + 1):
            chunks += 1
        prev = (i, j)
    return chunks


def oracle_min_chunks(cand: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """(max matches, min chunks over all maximum matchings), by enumeration."""
    m = sum((Counter(cand) & Counter(ref)).values())
    if m == 0:
        return 0, 0
    best: list[int | None] = [None]
    used: set[int] = set()
    pairs: list[tuple[int, int]] = []

    def rec(i: int, matched: int) -> None:
        if matched + (len(cand) - i) < m:
            return
        if i == len(cand):
            if matched == m:
                c = _chunks_of(pairs)
                if best[0] is None or c < best[0]:
                    best[0] = c
            return
        rec(i + 1, matched)
        for j, tok in enumerate(ref):
            if j not in used and tok == cand[i]:
                used.add(j)
                pairs.append((i, j))
                rec(i + 1, matched + 1)
                pairs.pop()
                used.remove(j)

    rec(0, 0)
    assert best[0] is not None
    return m, best[0]


def oracle_meteor(cand: Sequence[str], ref: Sequence[str]) -> float:
    m, chunks = oracle_min_chunks(cand, ref)
    if m == 0:
        return 0.0
    p = Fraction(m, len(cand))
    r = Fraction(m, len(ref))
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = Fraction(1, 2) * Fraction(chunks, m) ** 3
    return float(f_mean * (1 - penalty))


# --------------------------------------------------------------------------
# naive BLEU / ROUGE oracles (straight transliteration of the formulas)

def oracle_bleu(cand: Sequence[str], ref: Sequence[str], k: int) -> float:
    import math

    logs = []
    for n in range(1, k + 1):
        cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
        ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
        if not cand_grams:
            return 0.0
        matched = 0
        pool = list(ref_grams)
        for g in cand_grams:
            if g in pool:
                pool.remove(g)
                matched += 1
        if matched == 0:
            return 0.0
        logs.append(math.log(matched / len(cand_grams)))
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(sum(logs) / k)


def oracle_rouge_n(cand: Sequence[str], ref: Sequence[str], n: int) -> float:
    cand_grams = [tuple(cand[i : i + n]) for i in range(len(cand) - n + 1)]
    ref_grams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
    matched = 0
    pool = list(ref_grams)
    for g in cand_grams:
        if g in pool:
            pool.remove(g)
            matched += 1
    if matched == 0 or not cand_grams or not ref_grams:
        return 0.0
    p = matched / len(cand_grams)
    r = matched / len(ref_grams)
    return 2 * p * r / (p + r)


def oracle_rouge_l(cand: Sequence[str], ref: Sequence[str]) -> float:
    lcs = oracle_lcs(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


# --------------------------------------------------------------------------
# fixture factories

def make_problem(
    pid: str = "p1",
    *,
    answer: str = "4",
    qtype: QuestionType = QuestionType.OPEN_ANSWER,
    kps: tuple[str, ...] = ("kg1",),
    difficulty: int = 2,
    question: str = "小明有2个苹果，又买了2个，现在一共有几个苹果？",
    solution: str = "先数原来的2个，再加上新买的2个，2加2等于4。",
) -> MathProblem:
    return MathProblem(
        id=pid,
        question_text=question,
        question_type=qtype,
        solution_steps=solution,
        final_answer=answer,
        knowledge_points=kps,
        difficulty=difficulty,
    )


def phases_for(n_teacher: int) -> list[TeachingPhase]:
    if n_teacher == 1:
        return [TeachingPhase.SUMMARIZATION]
    middle = [
        TeachingPhase.GUIDANCE if i % 2 == 0 else TeachingPhase.RECTIFICATION
        for i in range(n_teacher - 2)
    ]
    return [TeachingPhase.REVIEW, *middle, TeachingPhase.SUMMARIZATION]


def make_conversation(
    problem_id: str = "p1",
    n_teacher: int = 3,
    *,
    persona: str | None = None,
    tagged: bool = True,
    seed: int = 0,
) -> Conversation:
    phases = phases_for(n_teacher)
    utts: list[Utterance] = []
    for t in range(n_teacher):
        utts.append(
            Utterance(
                role=Speaker.TEACHER,
                text=f"老师讲解第{t}步 step {t} of {seed}",
                index=len(utts),
                phase=phases[t] if tagged else None,
            )
        )
        if t < n_teacher - 1:
            utts.append(
                Utterance(
                    role=Speaker.STUDENT,
                    text=f"学生回答第{t}次 answer {t}",
                    index=len(utts),
                )
            )
    personas = (persona,) if persona is not None else None
    return Conversation(problem_id=problem_id, utterances=tuple(utts), personas=personas)


def make_dataset(
    n_conv: int = 10,
    *,
    n_problems: int | None = None,
    seed: int = 0,
    turn_counts: Sequence[int] | None = None,
    one_problem_per_conv: bool = False,
) -> Dataset:
    """A synthetic dataset. ``one_problem_per_conv`` pairs conversation i
    with problem i, which keeps teacher-forced contexts unambiguous for
    gold-echo backends."""
    rng = random.Random(seed)
    if one_problem_per_conv:
        n_problems = max(n_conv, 1)
    n_problems = n_problems or max(1, n_conv // 2)
    kps = {
        f"kg{k}": KnowledgePoint(id=f"kg{k}", name=f"知识点{k}",
                                 parent_id="kg0" if k > 0 and rng.random() < 0.3 else None)
        for k in range(max(3, n_problems))
    }
    problems = {}
    kp_ids = sorted(kps)
    for p in range(n_problems):
        chosen = tuple(rng.sample(kp_ids, k=rng.randint(1, min(3, len(kp_ids)))))
        problems[f"p{p}"] = make_problem(
            f"p{p}",
            answer=str(rng.randint(1, 99)),
            kps=chosen,
            difficulty=rng.randint(1, 5),
            question=f"第{p}题：计算 {p} + {p + 1} 等于多少 question {p}",
            solution=f"第{p}题的解法：逐步相加即可 solution steps {p}",
        )
    convs = []
    for c in range(n_conv):
        n_teacher = turn_counts[c] if turn_counts is not None else rng.randint(2, 6)
        pid = f"p{c}" if one_problem_per_conv else f"p{rng.randrange(n_problems)}"
        convs.append(
            make_conversation(
                problem_id=pid,
                n_teacher=n_teacher,
                persona=rng.choice([None, "naughty", "careless", "self-confident"]),
                seed=c,
            )
        )
    return Dataset(problems=problems, knowledge_points=kps, conversations=tuple(convs))
