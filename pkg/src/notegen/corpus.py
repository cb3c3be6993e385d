"""Dialogue-note corpus loading and clinical note section parsing.

A corpus is a set of dialogue-note pairs split into train/validation/test,
each tagged with a dataset source. Notes are parsed into header-delimited
sections, and each section header is mapped onto one of the four evaluation
categories (subjective, objective exam, objective results, assessment and
plan) via a user-overridable taxonomy.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

logger = logging.getLogger(__name__)

HEADER_MAX_LEN = 64
_HEADER_ALLOWED_PUNCT = set(":/-& ")


class CorpusLoadError(ValueError):
    """Raised when a corpus file is missing, unreadable, or malformed."""


class TaxonomyError(ValueError):
    """Raised when a taxonomy config is structurally invalid."""


class Split(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


class Category(str, Enum):
    SUBJECTIVE = "subjective"
    OBJECTIVE_EXAM = "objective_exam"
    OBJECTIVE_RESULTS = "objective_results"
    ASSESSMENT_AND_PLAN = "assessment_and_plan"
    UNKNOWN = "unknown"


#: The four categories used for scoring; UNKNOWN is excluded.
EVAL_CATEGORIES = (
    Category.SUBJECTIVE,
    Category.OBJECTIVE_EXAM,
    Category.OBJECTIVE_RESULTS,
    Category.ASSESSMENT_AND_PLAN,
)


def canonicalize_header(header: str) -> str:
    """Canonical form of a section header: uppercase, collapsed whitespace,
    one trailing colon stripped."""
    text = header.strip()
    if text.endswith(":"):
        text = text[:-1]
    return " ".join(text.split()).upper()


@dataclass(frozen=True)
class SectionTaxonomy:
    """Set of valid canonical headers and their category assignments."""

    valid_headers: frozenset[str]
    category_map: dict[str, Category]

    def __post_init__(self) -> None:
        if not self.valid_headers:
            raise TaxonomyError("taxonomy has no valid headers")
        unmapped = self.valid_headers - set(self.category_map)
        if unmapped:
            raise TaxonomyError(f"headers without a category: {sorted(unmapped)}")
        if "GENHX" not in self.valid_headers:
            raise TaxonomyError("taxonomy must include the GENHX fallback header")

    def category_of(self, header: str) -> Category:
        return self.category_map.get(canonicalize_header(header), Category.UNKNOWN)

    @classmethod
    def from_mapping(cls, categories: dict[str, list[str]]) -> "SectionTaxonomy":
        category_map: dict[str, Category] = {}
        for cat_name, headers in categories.items():
            try:
                cat = Category(cat_name)
            except ValueError:
                raise TaxonomyError(f"unknown category {cat_name!r}") from None
            if cat is Category.UNKNOWN:
                raise TaxonomyError("'unknown' is not an assignable category")
            for header in headers:
                canon = canonicalize_header(header)
                if canon in category_map and category_map[canon] is not cat:
                    raise TaxonomyError(f"header {canon!r} mapped to two categories")
                category_map[canon] = cat
        return cls(valid_headers=frozenset(category_map), category_map=category_map)

    @classmethod
    def from_file(cls, path: str | Path) -> "SectionTaxonomy":
        """Load a taxonomy config: {"categories": {category: [header, ...]}}."""
        path = Path(path)
        if not path.exists():
            raise TaxonomyError(f"taxonomy file not found: {path}")
        with path.open(encoding="utf-8") as fh:
            data = json.load(fh)
        if "categories" not in data:
            raise TaxonomyError(f"{path}: missing 'categories' key")
        return cls.from_mapping(data["categories"])

    @classmethod
    def default(cls) -> "SectionTaxonomy":
        """Built-in header mapping covering common long-form and short-code headers."""
        raw = (
            resources.files("notegen")
            .joinpath("data/default_taxonomy.json")
            .read_text("utf-8")
        )
        return cls.from_mapping(json.loads(raw)["categories"])


def tag_category(header: str, taxonomy: SectionTaxonomy) -> Category:
    """Map a header to its evaluation category; unmapped headers are UNKNOWN."""
    return taxonomy.category_of(header)


@dataclass
class NoteSection:
    """One note section. `header` is canonical; `header_raw` preserves the
    original header line so serialization can round-trip."""

    header: str
    body: str
    category: Category
    header_raw: str = ""
    has_body: bool = True

    def __post_init__(self) -> None:
        if not self.header_raw:
            self.header_raw = self.header


@dataclass
class ClinicalNote:
    sections: list[NoteSection]
    preamble: str = ""
    has_preamble: bool = False


def is_header_line(line: str) -> bool:
    """True if the line matches the section-header grammar: non-empty after
    stripping trailing whitespace, at most 64 chars, at least one letter, and
    only uppercase letters, digits, spaces, and ':/-&'."""
    text = line.rstrip()
    if not text or len(text) > HEADER_MAX_LEN:
        return False
    has_alpha = False
    for ch in text:
        if ch.isalpha():
            if not ch.isupper() or not ch.isascii():
                return False
            has_alpha = True
        elif not (ch.isdigit() and ch.isascii()) and ch not in _HEADER_ALLOWED_PUNCT:
            return False
    return has_alpha


def parse_note(raw: str, taxonomy: SectionTaxonomy) -> ClinicalNote:
    """Split a raw note at header lines.

    Text before the first header becomes the preamble; a headerless note has
    zero sections and the whole text as preamble. Total: never raises.
    """
    normalized = raw.replace("\r\n", "\n").replace("\r", "\n")
    lines = normalized.split("\n")
    header_idx = [i for i, line in enumerate(lines) if is_header_line(line)]

    if not header_idx:
        return ClinicalNote(sections=[], preamble=normalized, has_preamble=bool(lines))

    first = header_idx[0]
    preamble_lines = lines[:first]
    sections: list[NoteSection] = []
    bounds = header_idx + [len(lines)]
    for start, end in zip(header_idx, bounds[1:]):
        raw_header = lines[start]
        body_lines = lines[start + 1 : end]
        canon = canonicalize_header(raw_header)
        sections.append(
            NoteSection(
                header=canon,
                body="\n".join(body_lines),
                category=taxonomy.category_of(canon),
                header_raw=raw_header,
                has_body=bool(body_lines),
            )
        )
    return ClinicalNote(
        sections=sections,
        preamble="\n".join(preamble_lines),
        has_preamble=bool(preamble_lines),
    )


def serialize_note(note: ClinicalNote) -> str:
    """Inverse of parse_note: reproduces the note text (line endings normalized)."""
    parts: list[str] = []
    if note.has_preamble:
        parts.append(note.preamble)
    for section in note.sections:
        parts.append(section.header_raw)
        if section.has_body:
            parts.append(section.body)
    return "\n".join(parts)


@dataclass(frozen=True)
class Example:
    """One dialogue-note pair."""

    id: str
    split: Split
    dataset_source: str
    dialogue: str
    note_raw: str

    def validate(self) -> None:
        if not self.id:
            raise CorpusLoadError("example with empty id")
        if not self.dataset_source:
            raise CorpusLoadError(f"example {self.id!r}: empty dataset_source")
        if self.split in (Split.TRAIN, Split.VALIDATION):
            if not self.dialogue:
                raise CorpusLoadError(f"example {self.id!r}: empty dialogue")
            if not self.note_raw:
                raise CorpusLoadError(f"example {self.id!r}: empty note")


@dataclass
class Corpus:
    examples: list[Example]
    taxonomy: SectionTaxonomy
    split_counts: dict[str, int] = field(default_factory=dict)
    source_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.split_counts:
            self.split_counts = dict(Counter(e.split.value for e in self.examples))
        if not self.source_counts:
            self.source_counts = dict(Counter(e.dataset_source for e in self.examples))

    def split(self, split: Split | str) -> list[Example]:
        split = Split(split)
        return [e for e in self.examples if e.split is split]

    def by_id(self, example_id: str) -> Example:
        for example in self.examples:
            if example.id == example_id:
                return example
        raise KeyError(example_id)


_REQUIRED_FIELDS = ("id", "split", "dataset_source", "dialogue", "note")


def _example_from_record(record: dict, lineno: int) -> Example:
    missing = [f for f in _REQUIRED_FIELDS if f not in record or record[f] is None]
    if missing:
        raise CorpusLoadError(f"line {lineno}: missing field(s) {', '.join(missing)}")
    try:
        split = Split(str(record["split"]))
    except ValueError:
        raise CorpusLoadError(
            f"line {lineno}: invalid split {record['split']!r}"
        ) from None
    example = Example(
        id=str(record["id"]),
        split=split,
        dataset_source=str(record["dataset_source"]),
        dialogue=str(record["dialogue"]),
        note_raw=str(record["note"]),
    )
    try:
        example.validate()
    except CorpusLoadError as exc:
        raise CorpusLoadError(f"line {lineno}: {exc}") from None
    return example


def _iter_jsonl(path: Path):
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusLoadError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise CorpusLoadError(f"line {lineno}: record is not an object")
            yield lineno, record


def _iter_csv(path: Path):
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        for record in reader:
            yield reader.line_num, {k: v for k, v in record.items() if k is not None}


def load_corpus(path: str | Path, taxonomy: SectionTaxonomy | None = None) -> Corpus:
    """Load a corpus from a JSONL (one object per line) or CSV file.

    Fields per record: id, split, dataset_source, dialogue, note. Malformed
    records and duplicate ids are rejected with the offending line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusLoadError(f"corpus file not found: {path}")
    taxonomy = taxonomy or SectionTaxonomy.default()

    records = _iter_csv(path) if path.suffix.lower() == ".csv" else _iter_jsonl(path)
    examples: list[Example] = []
    seen: dict[str, int] = {}
    for lineno, record in records:
        example = _example_from_record(record, lineno)
        if example.id in seen:
            raise CorpusLoadError(
                f"duplicate id {example.id!r} on lines {seen[example.id]} and {lineno}"
            )
        seen[example.id] = lineno
        examples.append(example)

    corpus = Corpus(examples=examples, taxonomy=taxonomy)
    if not examples:
        logger.warning("corpus file %s contains no records", path)
    logger.info("loaded %s: split counts %s", path, corpus.split_counts)
    return corpus


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus back out as JSONL with the canonical field names."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for e in corpus.examples:
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "split": e.split.value,
                        "dataset_source": e.dataset_source,
                        "dialogue": e.dialogue,
                        "note": e.note_raw,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
