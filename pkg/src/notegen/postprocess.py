"""Output post-processing.

Repairs invalid section headers with fuzzy matching against the taxonomy's
valid header set, and encodes/parses the joint "header + section text" target
format used for section-level generation, falling back to GENHX when a
predicted header is invalid or the markers are missing.
"""

from __future__ import annotations

import random
import re
from collections import Counter
from dataclasses import dataclass, replace

from .corpus import ClinicalNote, SectionTaxonomy, TaxonomyError, canonicalize_header

FALLBACK_HEADER = "GENHX"
MIN_REPAIR_SIMILARITY = 0.4

_TASKA_TEMPLATE = "Section header: {header} Section text: {text}"
_TASKA_PATTERN = re.compile(
    r"section\s+header\s*:\s*(?P<header>.*?)\s*section\s+text\s*:\s?(?P<text>.*)",
    re.IGNORECASE | re.DOTALL,
)


def levenshtein(a: str, b: str) -> int:
    """Edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def similarity_ratio(a: str, b: str) -> float:
    """Normalized similarity 1 - levenshtein/max(len); 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


@dataclass(frozen=True)
class HeaderRepair:
    original: str
    replacement: str
    similarity: float


def best_valid_header(header: str, taxonomy: SectionTaxonomy) -> tuple[str, float]:
    """The valid header maximizing similarity to `header`, ties lexicographic.

    Below the minimum-similarity floor, falls back to GENHX.
    """
    if not taxonomy.valid_headers:
        raise TaxonomyError("taxonomy has no valid headers")
    best_header = ""
    best_score = -1.0
    for candidate in sorted(taxonomy.valid_headers):
        score = similarity_ratio(header, candidate)
        if score > best_score:
            best_header, best_score = candidate, score
    if best_score < MIN_REPAIR_SIMILARITY:
        return FALLBACK_HEADER, similarity_ratio(header, FALLBACK_HEADER)
    return best_header, best_score


def repair_headers(
    note: ClinicalNote, taxonomy: SectionTaxonomy
) -> tuple[ClinicalNote, list[HeaderRepair]]:
    """Replace every invalid section header with its closest valid header.

    Valid headers pass through untouched; the operation is idempotent.
    """
    repairs: list[HeaderRepair] = []
    sections = []
    for section in note.sections:
        if section.header in taxonomy.valid_headers:
            sections.append(section)
            continue
        replacement, score = best_valid_header(section.header, taxonomy)
        repairs.append(
            HeaderRepair(original=section.header, replacement=replacement, similarity=score)
        )
        sections.append(
            replace(
                section,
                header=replacement,
                header_raw=replacement,
                category=taxonomy.category_of(replacement),
            )
        )
    return (
        ClinicalNote(sections=sections, preamble=note.preamble, has_preamble=note.has_preamble),
        repairs,
    )


@dataclass(frozen=True)
class TaskATarget:
    header: str
    section_text: str


def encode_taska_target(header: str, text: str) -> str:
    """Render the joint header+text target: "Section header: H Section text: T"."""
    if not header:
        raise ValueError("header must be non-empty")
    return _TASKA_TEMPLATE.format(header=header, text=text)


def parse_taska_output(text: str, taxonomy: SectionTaxonomy) -> TaskATarget:
    """Extract (header, section_text) from model output.

    Markers match case-insensitively and tolerate a newline between the header
    and "Section text:". An invalid header is replaced with GENHX (text kept);
    if the markers are absent the whole input becomes GENHX section text.
    """
    match = _TASKA_PATTERN.search(text)
    if match is None:
        return TaskATarget(header=FALLBACK_HEADER, section_text=text)
    header = canonicalize_header(match.group("header"))
    if header not in taxonomy.valid_headers:
        header = FALLBACK_HEADER
    return TaskATarget(header=header, section_text=match.group("text"))


def predict_header_baseline(
    train_headers: list[str], strategy: str, seed: int | None = None
) -> str:
    """Header-prediction baselines.

    majority: the most frequent header (ties lexicographic). random: uniform
    over the distinct headers in the pool, deterministic under the seed.
    """
    if not train_headers:
        raise ValueError("train_headers must be non-empty")
    if strategy == "majority":
        counts = Counter(train_headers)
        return min(counts, key=lambda h: (-counts[h], h))
    if strategy == "random":
        return random.Random(seed).choice(sorted(set(train_headers)))
    raise ValueError(f"unknown baseline strategy {strategy!r}")
