"""Split discharge-report free text into the 8 canonical sections.

Headers are matched line by line against a configurable lexicon of
case- and diacritic-insensitive regexes anchored at line starts. A matched
header opens a section that runs to the next matched header or the end of
the text; anything before the first header lands in the "unsectioned"
bucket. Pure function: reports can be sectioned in parallel.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .data_model import (
    UNSECTIONED,
    CanonicalSection,
    CorpusError,
    DischargeReport,
    Section,
    SectionedReport,
)
from .textnorm import fold


@dataclass(frozen=True)
class LexiconEntry:
    pattern: str
    section: CanonicalSection
    priority: int
    regex: re.Pattern = None  # compiled over folded lines

    def __post_init__(self):
        # Anchored at line start, optional leading whitespace, optional colon.
        compiled = re.compile(r"[ \t]*(?:" + self.pattern + r")[ \t]*:?[ \t]*")
        object.__setattr__(self, "regex", compiled)


@dataclass(frozen=True)
class SectionLexicon:
    entries: tuple[LexiconEntry, ...]

    def __post_init__(self):
        covered = {e.section for e in self.entries}
        missing = [s.value for s in CanonicalSection if s not in covered]
        if missing:
            raise CorpusError(f"lexicon does not cover sections: {', '.join(missing)}")


def load_lexicon(path: str | Path) -> SectionLexicon:
    """Load a lexicon CSV (``pattern,section,priority``)."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(ln for ln in fh if not ln.startswith("#"))
        header = next(reader, None)
        if header != ["pattern", "section", "priority"]:
            raise CorpusError(f"{path}: bad lexicon header {header!r}")
        for row in reader:
            if len(row) != 3:
                raise CorpusError(f"{path}: malformed lexicon row {row!r}")
            pattern, section, priority = row
            try:
                section_e = CanonicalSection(section)
            except ValueError:
                raise CorpusError(f"{path}: unknown section {section!r}") from None
            try:
                compiled_entry = LexiconEntry(pattern=pattern, section=section_e,
                                              priority=int(priority))
            except re.error as exc:
                raise CorpusError(f"{path}: pattern {pattern!r} does not compile ({exc})") from None
            entries.append(compiled_entry)
    return SectionLexicon(entries=tuple(entries))


def bundled_lexicon() -> SectionLexicon:
    with resources.as_file(resources.files("afrec.resources") / "lexicon.csv") as p:
        return load_lexicon(p)


def _match_header(folded_line: str, lexicon: SectionLexicon):
    """Best header match for one folded line, or None.

    Higher priority wins; ties break toward the longest matched header
    string, then lexicon order.
    """
    best = None
    for idx, entry in enumerate(lexicon.entries):
        m = entry.regex.match(folded_line)
        if m is None:
            continue
        key = (entry.priority, m.end(), -idx)
        if best is None or key > best[0]:
            best = (key, entry, m.end())
    if best is None:
        return None
    return best[1], best[2]


def parse_sections(report: DischargeReport, lexicon: SectionLexicon) -> SectionedReport:
    """Deterministically decompose a report body into sections.

    A report with no recognized headers yields a single unsectioned bucket
    covering the whole body.
    """
    body = report.body
    folded = fold(body)

    # (line_start, header_end, section) per matched header line.
    headers: list[tuple[int, int, CanonicalSection]] = []
    pos = 0
    while pos <= len(body):
        nl = folded.find("\n", pos)
        line_end = len(body) if nl == -1 else nl
        hit = _match_header(folded[pos:line_end], lexicon)
        if hit is not None:
            entry, matched_len = hit
            headers.append((pos, pos + matched_len, entry.section))
        if nl == -1:
            break
        pos = nl + 1

    sections: list[Section] = []
    if not headers or headers[0][0] > 0:
        end = headers[0][0] if headers else len(body)
        sections.append(Section(name=UNSECTIONED, start=0, end=end,
                                header_end=0, text=body[0:end]))
    for i, (start, header_end, section) in enumerate(headers):
        end = headers[i + 1][0] if i + 1 < len(headers) else len(body)
        sections.append(Section(name=section.value, start=start, end=end,
                                header_end=header_end, text=body[start:end]))
    return SectionedReport(report=report, sections=tuple(sections))
