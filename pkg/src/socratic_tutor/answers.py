"""Answer normalization: map free-text answers onto comparable values.

The tutor needs to decide whether "我觉得是1/2", "0.5" and "50%" are the
same answer. Numeric answers are reduced to exact rationals; everything
else falls back to a lowercased trimmed string.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .tokenizer import tokenize

# Order matters: a fraction must win over its own numerator/denominator,
# a percent over its bare number.
_NUMBER_RE = re.compile(
    r"(?P<frac>-?\d+\s*/\s*\d+)"
    r"|(?P<pct>-?\d+(?:\.\d+)?\s*[%％])"
    r"|(?P<num>-?\d+(?:\.\d+)?)"
)

_CHOICE_LETTERS = frozenset("abcdef")


@dataclass(frozen=True)
class NormalizedAnswer:
    """Either an exact rational or a lowercased string form."""

    value: Fraction | str

    @property
    def is_numeric(self) -> bool:
        return isinstance(self.value, Fraction)


def _parse_match(match: re.Match[str]) -> Fraction:
    if match.group("frac") is not None:
        num, den = match.group("frac").split("/")
        return Fraction(int(num), int(den))
    if match.group("pct") is not None:
        body = match.group("pct").rstrip("%％").strip()
        return Fraction(body) / 100
    return Fraction(match.group("num"))


def normalize_answer(text: str) -> NormalizedAnswer:
    """Normalize an answer string.

    Trims whitespace, then extracts the *last* numeric literal, parsing
    decimals, percents (divided by 100) and simple ``a/b`` fractions into
    an exact rational. Unparseable numerics (e.g. zero denominators) and
    non-numeric text fall back to the lowercased trimmed string.
    """
    trimmed = text.strip()
    last: re.Match[str] | None = None
    for m in _NUMBER_RE.finditer(trimmed):
        last = m
    if last is not None:
        try:
            return NormalizedAnswer(_parse_match(last))
        except (ValueError, ZeroDivisionError):
            pass
    return NormalizedAnswer(trimmed.lower())


def contains_answer_candidate(text: str, *, accept_choice_letter: bool = False) -> bool:
    """True when ``text`` carries something that could be an answer.

    A numeric literal always counts; a standalone choice letter (a..f)
    counts only when ``accept_choice_letter`` is set, so that English
    articles in open-answer replies are not mistaken for choices.
    """
    if _NUMBER_RE.search(text) is not None:
        return True
    if accept_choice_letter:
        return any(len(tok) == 1 and tok in _CHOICE_LETTERS for tok in tokenize(text))
    return False


def answer_literals(text: str) -> list[NormalizedAnswer]:
    """Every parseable numeric literal in ``text``, in order of appearance."""
    out: list[NormalizedAnswer] = []
    for m in _NUMBER_RE.finditer(text):
        try:
            out.append(NormalizedAnswer(_parse_match(m)))
        except (ValueError, ZeroDivisionError):
            continue
    return out
