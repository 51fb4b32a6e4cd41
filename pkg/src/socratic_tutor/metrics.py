"""Reference-based generation metrics implemented from first principles.

All metrics operate on pre-tokenized sequences (see tokenizer.tokenize), use
a single reference, and return scores in [0, 1].

- bleu: clipped modified n-gram precision, geometric mean over orders,
  brevity penalty exp(1 - r/c) for short candidates. No smoothing by
  default: a zero precision at order k zeroes BLEU-k and above. An optional
  add-epsilon smoothing is available for comparability experiments.
- rouge: n-gram overlap F1 for R-1/R-2, LCS-based F1 for R-L.
- meteor: exact-match unigram alignment maximizing matches and then
  minimizing chunks, F_mean = 10PR/(R+9P), fragmentation penalty
  0.5 * (chunks/matches)^3.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

Tokens = Sequence[str]


class EmptyCandidate(ValueError):
    pass


class EmptyReference(ValueError):
    pass


def _require_nonempty(candidate: Tokens, reference: Tokens) -> None:
    if len(candidate) == 0:
        raise EmptyCandidate("candidate token list is empty")
    if len(reference) == 0:
        raise EmptyReference("reference token list is empty")


def _ngram_counts(tokens: Tokens, n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# --------------------------------------------------------------------------
# BLEU


def bleu(
    candidate: Tokens,
    reference: Tokens,
    max_n: int = 4,
    *,
    smoothing_epsilon: float | None = None,
) -> list[float]:
    """BLEU-1..max_n against a single reference.

    Returns one score per order. Without smoothing, a zero clipped
    precision at order k makes every BLEU-j for j >= k zero.
    """
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    _require_nonempty(candidate, reference)

    precisions: list[float] = []
    for n in range(1, max_n + 1):
        total = max(len(candidate) - n + 1, 0)
        if total == 0:
            precisions.append(0.0)
            continue
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        matched = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        precisions.append(matched / total)

    c, r = len(candidate), len(reference)
    bp = 1.0 if c >= r else math.exp(1.0 - r / c)

    scores: list[float] = []
    for k in range(1, max_n + 1):
        ps = precisions[:k]
        if smoothing_epsilon is not None:
            ps = [p if p > 0 else smoothing_epsilon for p in ps]
        if any(p == 0 for p in ps):
            scores.append(0.0)
            continue
        log_mean = sum(math.log(p) for p in ps) / k
        scores.append(bp * math.exp(log_mean))
    return scores


# --------------------------------------------------------------------------
# ROUGE

ROUGE_VARIANTS = ("r1", "r2", "rl")


def _f1(matches: float, n_cand: float, n_ref: float) -> float:
    if matches == 0 or n_cand == 0 or n_ref == 0:
        return 0.0
    p = matches / n_cand
    r = matches / n_ref
    return 2 * p * r / (p + r)


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Longest common subsequence length, O(len(a) * len(b)) time, O(min) space."""
    if len(a) < len(b):
        a, b = b, a
    m = len(b)
    prev = [0] * (m + 1)
    for x in a:
        cur = [0] * (m + 1)
        left = 0
        for j in range(1, m + 1):
            if x == b[j - 1]:
                left = prev[j - 1] + 1
            else:
                up = prev[j]
                left = up if up > left else left
            cur[j] = left
        prev = cur
    return prev[m]


def rouge(candidate: Tokens, reference: Tokens, variant: str = "r1") -> float:
    """ROUGE F1 for variant r1 (unigrams), r2 (bigrams) or rl (LCS)."""
    if variant not in ROUGE_VARIANTS:
        raise ValueError(f"variant must be one of {ROUGE_VARIANTS}")
    _require_nonempty(candidate, reference)

    if variant == "rl":
        return _f1(lcs_length(candidate, reference), len(candidate), len(reference))

    n = 1 if variant == "r1" else 2
    cand_counts = _ngram_counts(candidate, n)
    ref_counts = _ngram_counts(reference, n)
    matches = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
    return _f1(
        matches, max(len(candidate) - n + 1, 0), max(len(reference) - n + 1, 0)
    )


# --------------------------------------------------------------------------
# METEOR


def _max_matches(candidate: Tokens, reference: Tokens) -> int:
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    return sum(min(count, ref_counts[tok]) for tok, count in cand_counts.items())


def _greedy_chunks(candidate: Tokens, reference: Tokens, m: int) -> int:
    """Upper bound: repeatedly take the longest available common block.

    Any block choice keeps a full matching reachable (per-word budgets drop
    by exactly the block's usage on both sides), so this always covers m
    tokens.
    """
    cand_used = [False] * len(candidate)
    ref_used = [False] * len(reference)
    remaining = m
    chunks = 0
    while remaining > 0:
        best_len, best = 0, None
        for i in range(len(candidate)):
            if cand_used[i]:
                continue
            for j in range(len(reference)):
                if ref_used[j] or reference[j] != candidate[i]:
                    continue
                length = 0
                while (
                    i + length < len(candidate)
                    and j + length < len(reference)
                    and not cand_used[i + length]
                    and not ref_used[j + length]
                    and candidate[i + length] == reference[j + length]
                ):
                    length += 1
                if length > best_len:
                    best_len, best = length, (i, j)
        if best is None:
            break  # unreachable if m was computed from the same sequences
        take = min(best_len, remaining)
        i, j = best
        for k in range(take):
            cand_used[i + k] = True
            ref_used[j + k] = True
        remaining -= take
        chunks += 1
    return chunks


def _min_chunks(candidate: Tokens, reference: Tokens, m: int, node_budget: int = 200_000) -> int:
    """Fewest contiguous blocks covering a maximum unigram matching.

    Exact branch-and-bound seeded with the greedy bound. The underlying
    problem is equivalent to minimum common string partition and therefore
    NP-hard, so the search carries a node budget; if exceeded, the best
    solution found so far is returned (still a valid alignment, so scores
    stay in bounds). Curated and test-sized inputs complete exactly.
    """
    best = _greedy_chunks(candidate, reference, m)
    if best <= 1 or m == 0:
        return best

    n_c, n_r = len(candidate), len(reference)
    cand_used = [False] * n_c
    ref_used = [False] * n_r
    skip_budget = n_c - m
    nodes = 0

    def search(start: int, remaining: int, skips: int, chunks: int) -> None:
        nonlocal best, nodes
        if remaining == 0:
            if chunks < best:
                best = chunks
            return
        if chunks + 1 >= best or nodes > node_budget:
            return
        nodes += 1
        i = start
        while i < n_c and cand_used[i]:
            i += 1
        if i >= n_c:
            return
        token = candidate[i]
        # Option 1: start a block at i, longest extensions first.
        starts = [j for j in range(n_r) if not ref_used[j] and reference[j] == token]
        for j in starts:
            length = 0
            while (
                i + length < n_c
                and j + length < n_r
                and not cand_used[i + length]
                and not ref_used[j + length]
                and candidate[i + length] == reference[j + length]
            ):
                length += 1
            for take in range(min(length, remaining), 0, -1):
                for k in range(take):
                    cand_used[i + k] = True
                    ref_used[j + k] = True
                search(i + take, remaining - take, skips, chunks + 1)
                for k in range(take):
                    cand_used[i + k] = False
                    ref_used[j + k] = False
        # Option 2: leave i unmatched.
        if skips < skip_budget or not starts:
            search(i + 1, remaining, skips + 1, chunks)

    search(0, m, 0, 0)
    return best


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """Exact-match METEOR with the canonical parameters (10PR/(R+9P), 0.5, 3)."""
    _require_nonempty(candidate, reference)
    m = _max_matches(candidate, reference)
    if m == 0:
        return 0.0
    chunks = _min_chunks(candidate, reference, m)
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)
