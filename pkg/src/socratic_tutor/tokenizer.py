"""Tokenization for mixed Chinese/Latin text.

Character-level for CJK ideographs, run-level for Latin letters and digits.
This is the single tokenizer used everywhere downstream (metrics, dataset
statistics, token budgets), so scores and counts stay comparable across the
whole toolkit. The unit for Chinese text is the character; reports that
surface "word" counts label the unit explicitly.
"""
from __future__ import annotations

_CJK_RANGES = (
    (0x3400, 0x4DBF),    # CJK extension A
    (0x4E00, 0x9FFF),    # CJK unified ideographs
    (0xF900, 0xFAFF),    # CJK compatibility ideographs
    (0x20000, 0x2EBEF),  # CJK extensions B..F
    (0x2F800, 0x2FA1F),  # compatibility supplement
)


def _is_cjk(codepoint: int) -> bool:
    return any(lo <= codepoint <= hi for lo, hi in _CJK_RANGES)


def _is_latin(ch: str) -> bool:
    o = ord(ch)
    if 0x41 <= o <= 0x5A or 0x61 <= o <= 0x7A:
        return True
    # Latin-1 supplement and Latin extended A/B letters (é, ü, ...)
    return 0xC0 <= o <= 0x24F and ch.isalpha()


def tokenize(text: str) -> list[str]:
    """Split ``text`` into CJK characters, Latin-letter runs and digit runs.

    Each CJK codepoint is its own token; maximal contiguous runs of Latin
    letters or of ASCII digits are single tokens (Latin runs lowercased);
    all other punctuation, whitespace and scripts are dropped. Empty input
    yields an empty list.
    """
    tokens: list[str] = []
    run: list[str] = []
    run_kind = ""  # "" | "latin" | "digit"

    def flush() -> None:
        nonlocal run, run_kind
        if run:
            word = "".join(run)
            tokens.append(word.lower() if run_kind == "latin" else word)
        run = []
        run_kind = ""

    for ch in text:
        if _is_cjk(ord(ch)):
            flush()
            tokens.append(ch)
        elif _is_latin(ch):
            if run_kind != "latin":
                flush()
                run_kind = "latin"
            run.append(ch)
        elif "0" <= ch <= "9":
            if run_kind != "digit":
                flush()
                run_kind = "digit"
            run.append(ch)
        else:
            flush()
    flush()
    return tokens


def token_count(text: str) -> int:
    return len(tokenize(text))
