"""Text normalization shared by the section and entity matchers.

Spanish clinical text is inconsistently accented and cased, so all pattern
matching runs over a folded view of the text. Folding is strictly
one-character-to-one-character so that match spans can be mapped back onto
the original body without offset bookkeeping.
"""

from __future__ import annotations

import re
import unicodedata

_FOLD_CACHE: dict[str, str] = {}

# Sentence boundaries in clinical notes: newline-heavy prose, terse lists.
_SENTENCE_BREAK = re.compile(r"[.;\n]")

_WORD = re.compile(r"\w+", re.UNICODE)


def fold_char(ch: str) -> str:
    """Lowercase one character and strip its diacritics (length-preserving)."""
    out = _FOLD_CACHE.get(ch)
    if out is None:
        decomposed = unicodedata.normalize("NFD", ch.lower())
        out = decomposed[0] if decomposed else ch.lower()
        _FOLD_CACHE[ch] = out
    return out


def fold(text: str) -> str:
    """Fold a string for matching. len(fold(s)) == len(s) always."""
    return "".join(fold_char(ch) for ch in text)


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Half-open [start, end) spans of sentences split on '.', ';', newline."""
    spans = []
    start = 0
    for m in _SENTENCE_BREAK.finditer(text):
        spans.append((start, m.start()))
        start = m.end()
    spans.append((start, len(text)))
    return [(s, e) for s, e in spans if e > s]


def token_spans(text: str) -> list[tuple[int, int]]:
    """Word-token spans, used for negation scope windows."""
    return [(m.start(), m.end()) for m in _WORD.finditer(text)]
