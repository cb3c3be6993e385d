"""Deterministic synthetic dialogue-note corpora.

The shared-task data is private, so offline runs and tests use generated
corpora: speaker-turn dialogues and section-structured notes over a small
clinical vocabulary, reproducible from a seed.
"""

from __future__ import annotations

import random

from .corpus import Corpus, Example, SectionTaxonomy, Split

_COMPLAINTS = [
    "cough", "chest pain", "headache", "back pain", "fatigue", "fever",
    "shortness of breath", "knee pain", "dizziness", "sore throat",
    "abdominal pain", "rash",
]
_DURATIONS = ["two days", "a week", "three weeks", "a month", "several months"]
_MEDS = ["lisinopril", "metformin", "ibuprofen", "albuterol", "atorvastatin", "amoxicillin"]
_HISTORIES = ["hypertension", "diabetes", "asthma", "high cholesterol", "migraines"]
_EXAM_FINDINGS = [
    "lungs clear to auscultation", "no acute distress", "mild tenderness on palpation",
    "normal heart sounds", "no swelling noted", "full range of motion",
]
_PLANS = [
    "rest and fluids", "a course of antibiotics", "physical therapy",
    "an increase in current medication", "follow-up in two weeks", "imaging if symptoms persist",
]
_SOURCES = ["clinic-a", "clinic-b", "virtual"]


def _make_dialogue(rng: random.Random, complaint: str, duration: str, history: str) -> str:
    lines = [
        "[doctor] hi there, what brings you in today?",
        f"[patient] i have been having {complaint} for {duration}.",
        f"[doctor] i see. any history of {history}?",
        rng.choice(
            [
                "[patient] yes, i was diagnosed a few years ago.",
                "[patient] no, nothing like that.",
            ]
        ),
        "[doctor] are you taking any medications?",
        f"[patient] just {rng.choice(_MEDS)}.",
        "[doctor] alright, let me take a look.",
    ]
    return "\n".join(lines)


def _make_note(rng: random.Random, complaint: str, duration: str, history: str) -> str:
    sections = [
        ("CHIEF COMPLAINT", f"{complaint.capitalize()}."),
        (
            "HISTORY OF PRESENT ILLNESS",
            f"Patient reports {complaint} for {duration}. "
            f"History notable for {history}.",
        ),
        ("MEDICATIONS", f"{rng.choice(_MEDS).capitalize()}."),
        ("PHYSICAL EXAM", f"{rng.choice(_EXAM_FINDINGS).capitalize()}."),
        ("RESULTS", rng.choice(["Labs within normal limits.", "No imaging performed."])),
        (
            "ASSESSMENT AND PLAN",
            f"Likely {complaint}. Recommend {rng.choice(_PLANS)}.",
        ),
    ]
    parts: list[str] = []
    for header, body in sections:
        parts.append(header)
        parts.append(body)
        parts.append("")
    return "\n".join(parts).rstrip("\n")


def make_synthetic_corpus(
    n_train: int = 67,
    n_validation: int = 20,
    n_test: int = 0,
    seed: int = 0,
    taxonomy: SectionTaxonomy | None = None,
) -> Corpus:
    """Generate a corpus with the given split sizes, deterministic under seed."""
    rng = random.Random(seed)
    examples: list[Example] = []
    specs = [(Split.TRAIN, n_train, "T"), (Split.VALIDATION, n_validation, "V"),
             (Split.TEST, n_test, "X")]
    for split, count, prefix in specs:
        for i in range(count):
            complaint = rng.choice(_COMPLAINTS)
            duration = rng.choice(_DURATIONS)
            history = rng.choice(_HISTORIES)
            examples.append(
                Example(
                    id=f"{prefix}{i + 1}",
                    split=split,
                    dataset_source=rng.choice(_SOURCES),
                    dialogue=_make_dialogue(rng, complaint, duration, history),
                    note_raw=_make_note(rng, complaint, duration, history),
                )
            )
    return Corpus(examples=examples, taxonomy=taxonomy or SectionTaxonomy.default())
