#!/usr/bin/env python3
"""Simulate a full blinded preference study end to end.

Creates a study over a synthetic validation set with three note variants,
simulates three annotators submitting choices, closes the study, and prints
the tally and win-rate table.
"""

from __future__ import annotations

import argparse
import random
import tempfile
from pathlib import Path

from notegen.humaneval import (
    AnnotationRecord,
    StudyStore,
    VALID_CHOICES,
    create_study,
    format_results_table,
    record_annotation,
    unblind_and_tally,
    win_rate,
)
from notegen.synthetic import make_synthetic_corpus

SYSTEMS = ["GT", "FT", "ICL"]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tasks", type=int, default=20)
    parser.add_argument("--annotators", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--dir", type=Path, default=None,
                        help="Study directory (default: temp dir)")
    args = parser.parse_args()

    corpus = make_synthetic_corpus(n_train=0, n_validation=args.tasks, seed=args.seed)
    examples = [
        {
            "task_id": e.id,
            "dialogue": e.dialogue,
            "notes": {
                "GT": e.note_raw,
                "FT": e.note_raw.replace("Recommend", "Patient should try"),
                "ICL": e.note_raw.replace("Patient reports", "The patient describes"),
            },
        }
        for e in corpus.split("validation")
    ]
    study = create_study(examples, seed=args.seed, systems=SYSTEMS)

    directory = args.dir or Path(tempfile.mkdtemp(prefix="study-"))
    store = StudyStore(directory)
    store.save(study)
    print(f"study saved under {directory}")

    rng = random.Random(args.seed + 1)
    annotations = store.annotation_store()
    for a in range(args.annotators):
        annotator = f"annotator{a + 1}"
        for task in study.tasks:
            choice = rng.choice(VALID_CHOICES)
            record_annotation(
                annotations, study,
                AnnotationRecord(annotator_id=annotator, task_id=task.task_id, choice=choice),
            )
    print(f"recorded {len(annotations.records())} annotations")

    study = store.close_study()
    tally = unblind_and_tally(study, store.annotation_store().records())
    print(format_results_table(tally, win_rate(tally)))


if __name__ == "__main__":
    main()
