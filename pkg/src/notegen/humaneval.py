"""Blinded three-way preference study.

Each task shows a dialogue and three notes (one per system) under randomized
labels A/B/C. Annotators pick a single note, a two-way tie (A/B, B/C, C/A),
or a full tie (A/B/C). Unblinding maps labels back to systems; win rate is
the percentage of single-preference picks per system, excluding all ties.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

SINGLE_CHOICES = ("A", "B", "C")
PAIR_CHOICES = ("AB", "BC", "CA")
ALL_TIE_CHOICE = "ABC"
VALID_CHOICES = SINGLE_CHOICES + PAIR_CHOICES + (ALL_TIE_CHOICE,)

LABELS = ("A", "B", "C")
_PERMUTATIONS = tuple(itertools.permutations(LABELS))

ANNOTATION_INSTRUCTIONS = """\
Please asses the clinical notes A, B and C relative to the provided \
doctor-patient dialogue. For each set of notes, you should select which note \
you prefer ('A', 'B', or 'C'). If you have approximately equal preference \
for two notes, select ('A/B', 'B/C', or 'C/A'). If you have no preference, \
select 'A/B/C'. A 'good' note should contain all critical, most non-critical \
and very little irrelevant information mentioned in a dialogue:

- Critical: Items medico-legally required to document the diagnosis and \
treatment decisions whose absence or incorrectness may lead to wrong \
diagnosis and treatment later on, e.g. the symptom "cough" in a suspected \
chest infection consultation. This is the key information a note needs to \
capture correctly in order to not mislead clinicians.
- Non-critical: Items that should be documented in a complete note but whose \
absence will not affect future treatment or diagnosis, e.g. "who the patient \
lives with" in a consultation about chest infection.
- Irrelevant: Medically irrelevant information covered in the consultation, \
e.g. the pet of a patient with a suspected chest infection just died.
"""


class StudyError(ValueError):
    pass


class UnknownTaskError(StudyError):
    pass


class DuplicateAnnotationError(StudyError):
    pass


class StudyClosedError(StudyError):
    pass


class StudyOpenError(StudyError):
    """Raised when results are requested before the study is closed."""


@dataclass
class BlindedTask:
    """What an annotator sees: labels and texts only, never system identities."""

    task_id: str
    dialogue: str
    notes: list[dict[str, str]]  # [{"label": "A", "text": ...}, ...]

    def to_payload(self) -> dict:
        return {"task_id": self.task_id, "dialogue": self.dialogue, "notes": self.notes}


@dataclass
class Study:
    study_id: str
    systems: list[str]
    tasks: list[BlindedTask]
    blinding_key: dict[str, dict[str, str]]  # task_id -> {system: label}
    seed: int
    status: str = "open"
    instructions_text: str = ANNOTATION_INSTRUCTIONS

    @property
    def is_open(self) -> bool:
        return self.status == "open"

    def task_payloads(self) -> list[dict]:
        return [task.to_payload() for task in self.tasks]


def create_study(
    examples: list[dict],
    seed: int,
    systems: list[str] | None = None,
    study_id: str = "study",
    instructions_text: str = ANNOTATION_INSTRUCTIONS,
) -> Study:
    """Build a blinded study from {task_id, dialogue, notes: {system: text}} rows.

    Each task's system->label permutation is drawn uniformly from the six
    permutations with a seeded generator, so the blinding key is reproducible.
    """
    if not examples:
        raise StudyError("study needs at least one task")
    if systems is None:
        systems = sorted(examples[0].get("notes", {}))
    if len(systems) != 3:
        raise StudyError(f"exactly 3 systems required, got {systems}")

    rng = random.Random(seed)
    tasks: list[BlindedTask] = []
    blinding_key: dict[str, dict[str, str]] = {}
    for row in examples:
        task_id = str(row.get("task_id", ""))
        if not task_id:
            raise StudyError("task with missing task_id")
        if task_id in blinding_key:
            raise StudyError(f"duplicate task_id {task_id!r}")
        notes = row.get("notes", {})
        missing = [s for s in systems if s not in notes or not notes[s]]
        if missing:
            raise StudyError(f"task {task_id!r}: missing note for system(s) {missing}")
        labels = rng.choice(_PERMUTATIONS)
        key = {system: label for system, label in zip(systems, labels)}
        blinding_key[task_id] = key
        ordered = sorted(systems, key=lambda s: key[s])
        tasks.append(
            BlindedTask(
                task_id=task_id,
                dialogue=str(row.get("dialogue", "")),
                notes=[{"label": key[s], "text": notes[s]} for s in ordered],
            )
        )
    return Study(
        study_id=study_id,
        systems=list(systems),
        tasks=tasks,
        blinding_key=blinding_key,
        seed=seed,
        instructions_text=instructions_text,
    )


@dataclass(frozen=True)
class AnnotationRecord:
    annotator_id: str
    task_id: str
    choice: str
    submitted_at: str = ""

    def __post_init__(self) -> None:
        if self.choice not in VALID_CHOICES:
            raise StudyError(
                f"invalid choice {self.choice!r}; must be one of {', '.join(VALID_CHOICES)}"
            )
        if not self.annotator_id or not self.task_id:
            raise StudyError("annotator_id and task_id are required")
        if not self.submitted_at:
            object.__setattr__(
                self, "submitted_at", datetime.now(timezone.utc).isoformat()
            )

    def to_dict(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "task_id": self.task_id,
            "choice": self.choice,
            "submitted_at": self.submitted_at,
        }


class AnnotationStore:
    """Append-only annotation log, one JSON record per line.

    Appends are serialized by a single writer; (annotator_id, task_id) is
    unique, duplicates are rejected.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._seen: set[tuple[str, str]] = set()
        self._records: list[AnnotationRecord] = []
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                data = json.loads(line)
                record = AnnotationRecord(**data)
                self._seen.add((record.annotator_id, record.task_id))
                self._records.append(record)

    def records(self) -> list[AnnotationRecord]:
        return list(self._records)

    def has(self, annotator_id: str, task_id: str) -> bool:
        return (annotator_id, task_id) in self._seen

    def append(self, record: AnnotationRecord) -> None:
        key = (record.annotator_id, record.task_id)
        if key in self._seen:
            raise DuplicateAnnotationError(
                f"annotator {record.annotator_id!r} already annotated task {record.task_id!r}"
            )
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_dict()) + "\n")
        self._seen.add(key)
        self._records.append(record)


def record_annotation(store: AnnotationStore, study: Study, record: AnnotationRecord) -> dict:
    """Validate and append one annotation; returns an acknowledgment."""
    if not study.is_open:
        raise StudyClosedError(f"study {study.study_id!r} is closed")
    known = {task.task_id for task in study.tasks}
    if record.task_id not in known:
        raise UnknownTaskError(f"unknown task {record.task_id!r}")
    store.append(record)
    return {"status": "accepted", "task_id": record.task_id, "annotator_id": record.annotator_id}


@dataclass
class TallyBlock:
    singles: dict[str, int] = field(default_factory=dict)
    pair_ties: dict[str, int] = field(default_factory=dict)
    all_ties: int = 0
    annotated: int = 0

    def to_dict(self) -> dict:
        return {
            "singles": self.singles,
            "pair_ties": self.pair_ties,
            "all_ties": self.all_ties,
            "annotated": self.annotated,
        }


@dataclass
class PreferenceTally:
    systems: list[str]
    per_annotator: dict[str, TallyBlock] = field(default_factory=dict)
    overall: TallyBlock = field(default_factory=TallyBlock)
    discarded: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "systems": self.systems,
            "per_annotator": {a: b.to_dict() for a, b in self.per_annotator.items()},
            "overall": self.overall.to_dict(),
            "discarded": self.discarded,
        }


def _pair_key(system_a: str, system_b: str) -> str:
    return "/".join(sorted((system_a, system_b)))


def unblind_and_tally(study: Study, records: list[AnnotationRecord]) -> PreferenceTally:
    """Map blinded choices back to systems and count preferences.

    Records referencing unknown tasks are listed in the discard report rather
    than raising; tallies are independent of record order.
    """
    if study.is_open:
        raise StudyOpenError("close the study before tallying")
    tally = PreferenceTally(systems=list(study.systems))

    def block(annotator_id: str) -> TallyBlock:
        if annotator_id not in tally.per_annotator:
            tally.per_annotator[annotator_id] = TallyBlock(
                singles={s: 0 for s in study.systems},
                pair_ties={},
            )
        return tally.per_annotator[annotator_id]

    tally.overall = TallyBlock(singles={s: 0 for s in study.systems}, pair_ties={})

    for record in sorted(records, key=lambda r: (r.annotator_id, r.task_id)):
        key = study.blinding_key.get(record.task_id)
        if key is None:
            tally.discarded.append(
                {"annotator_id": record.annotator_id, "task_id": record.task_id,
                 "reason": "unknown task"}
            )
            continue
        label_to_system = {label: system for system, label in key.items()}
        blocks = (block(record.annotator_id), tally.overall)
        for b in blocks:
            b.annotated += 1
        if record.choice in SINGLE_CHOICES:
            system = label_to_system[record.choice]
            for b in blocks:
                b.singles[system] += 1
        elif record.choice in PAIR_CHOICES:
            pair = _pair_key(label_to_system[record.choice[0]], label_to_system[record.choice[1]])
            for b in blocks:
                b.pair_ties[pair] = b.pair_ties.get(pair, 0) + 1
        else:
            for b in blocks:
                b.all_ties += 1
    return tally


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass
class WinRateRow:
    percents: dict[str, int]
    defined: bool = True

    def to_dict(self) -> dict:
        return {"percents": self.percents, "defined": self.defined}


def win_rate_row(block: TallyBlock, systems: list[str]) -> WinRateRow:
    total = sum(block.singles.get(s, 0) for s in systems)
    if total == 0:
        return WinRateRow(percents={}, defined=False)
    return WinRateRow(
        percents={
            s: round_half_up(100.0 * block.singles.get(s, 0) / total) for s in systems
        }
    )


def win_rate(tally: PreferenceTally) -> dict:
    """Win rates per annotator and overall, excluding all tie categories."""
    return {
        "per_annotator": {
            annotator: win_rate_row(block, tally.systems)
            for annotator, block in sorted(tally.per_annotator.items())
        },
        "overall": win_rate_row(tally.overall, tally.systems),
    }


def format_results_table(tally: PreferenceTally, rates: dict) -> str:
    """Preferred counts, tie counts, and win-rate percents per annotator row."""
    systems = tally.systems
    pair_keys = sorted({k for b in tally.per_annotator.values() for k in b.pair_ties}
                       | set(tally.overall.pair_ties))
    if not pair_keys:
        pair_keys = [_pair_key(systems[1], systems[2])]
    headers = (
        ["Annotator"]
        + systems
        + pair_keys
        + ["All"]
        + [f"{s} %" for s in systems]
    )

    def render_row(name: str, block: TallyBlock, row: WinRateRow) -> list[str]:
        cells = [name]
        cells += [str(block.singles.get(s, 0)) for s in systems]
        cells += [str(block.pair_ties.get(k, 0)) for k in pair_keys]
        cells.append(str(block.all_ties))
        if row.defined:
            cells += [str(row.percents[s]) for s in systems]
        else:
            cells += ["-"] * len(systems)
        return cells

    rows = [headers]
    for annotator, block in sorted(tally.per_annotator.items()):
        rows.append(render_row(annotator, block, rates["per_annotator"][annotator]))
    rows.append(render_row("Total", tally.overall, rates["overall"]))

    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


class StudyStore:
    """Directory layout for one study.

    study.json holds the blinded task payloads and status; the blinding key
    lives in a separate blinding_key.json readable only by the study owner;
    annotations append to annotations.jsonl.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.study_path = self.directory / "study.json"
        self.key_path = self.directory / "blinding_key.json"
        self.annotations_path = self.directory / "annotations.jsonl"

    def save(self, study: Study) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        payload = {
            "study_id": study.study_id,
            "systems": study.systems,
            "seed": study.seed,
            "status": study.status,
            "instructions_text": study.instructions_text,
            "tasks": study.task_payloads(),
        }
        self.study_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        self.key_path.write_text(
            json.dumps({"blinding_key": study.blinding_key}, indent=2), encoding="utf-8"
        )
        self.key_path.chmod(0o600)  # owner-only: the key unblinds the study

    def load(self) -> Study:
        if not self.study_path.exists():
            raise StudyError(f"no study at {self.directory}")
        if not self.key_path.exists():
            raise StudyError(f"blinding key missing: {self.key_path}")
        data = json.loads(self.study_path.read_text(encoding="utf-8"))
        key = json.loads(self.key_path.read_text(encoding="utf-8"))["blinding_key"]
        tasks = [
            BlindedTask(task_id=t["task_id"], dialogue=t["dialogue"], notes=t["notes"])
            for t in data["tasks"]
        ]
        return Study(
            study_id=data["study_id"],
            systems=data["systems"],
            tasks=tasks,
            blinding_key=key,
            seed=data["seed"],
            status=data["status"],
            instructions_text=data["instructions_text"],
        )

    def annotation_store(self) -> AnnotationStore:
        return AnnotationStore(self.annotations_path)

    def close_study(self) -> Study:
        study = self.load()
        study.status = "closed"
        self.save(study)
        return study
