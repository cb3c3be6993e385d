"""Fine-tuning data export.

Produces source/target training pairs for the two sequence-to-sequence
subtasks (section-level generation with a joint header+text target, and full
note generation), together with the hyperparameter manifests those runs used.
Training itself happens elsewhere; this module only emits data and config.
"""

from __future__ import annotations

import json
from pathlib import Path

from .corpus import Corpus, Split, parse_note
from .postprocess import encode_taska_target

SOURCE_PREFIX_TASKA = (
    "Summarize the following patient-doctor dialogue. Include all medically "
    "relevant information, including family history, diagnosis, past medical "
    "(and surgical) history, immunizations, lab results and known allergies. "
    "You should first predict the most relevant clinical note section header "
    "and then summarize the dialogue. Dialogue:"
)

SOURCE_PREFIX_TASKB = (
    "Summarize the following patient-doctor dialogue. Include all medically "
    "relevant information, including family history, diagnosis, past medical "
    "(and surgical) history, immunizations, lab results and known allergies. "
    "Dialogue:"
)

TASKA_HYPERPARAMETERS = {
    "max_source_length": 1024,
    "max_target_length": 512,
    "source_prefix": SOURCE_PREFIX_TASKA,
    "train_batch_size": 8,
    "eval_batch_size": 12,
    "learning_rate": 1e-4,
    "optimizer": "AdamW",
    "num_train_epochs": 20,
    "warmup_ratio": 0.1,
    "lr_scheduler": "linear with warmup",
    "weight_decay": 0.01,
    "label_smoothing": 0.1,
    "bf16": True,
    "num_beams": 2,
}

TASKB_HYPERPARAMETERS = {
    "max_source_length": 4096,
    "max_target_length": 1024,
    "source_prefix": SOURCE_PREFIX_TASKB,
    "train_batch_size": 8,
    "eval_batch_size": 6,
    "learning_rate": 3e-5,
    "optimizer": "AdamW",
    "num_train_epochs": 50,
    "warmup_ratio": 0.1,
    "lr_scheduler": "linear with warmup",
    "weight_decay": 0.01,
    "label_smoothing": 0.1,
    "fp16": True,
    "num_beams": 4,
    "min_length": 100,
    "max_length": 1024,
    "length_penalty": 2.0,
    "no_repeat_ngram": 3,
}


def export_rows(corpus: Corpus, subtask: str, split: Split | str) -> list[dict]:
    """Source/target pairs for one split.

    Subtask B: source = prefix + dialogue, target = full note. Subtask A: one
    row per note section, target = the joint "Section header: ... Section
    text: ..." encoding.
    """
    subtask = subtask.upper()
    if subtask not in ("A", "B"):
        raise ValueError(f"subtask must be 'A' or 'B', got {subtask!r}")
    rows: list[dict] = []
    for example in corpus.split(split):
        if subtask == "B":
            rows.append(
                {
                    "id": example.id,
                    "source": f"{SOURCE_PREFIX_TASKB} {example.dialogue}",
                    "target": example.note_raw,
                }
            )
            continue
        note = parse_note(example.note_raw, corpus.taxonomy)
        for index, section in enumerate(note.sections):
            rows.append(
                {
                    "id": f"{example.id}#{index}",
                    "source": f"{SOURCE_PREFIX_TASKA} {example.dialogue}",
                    "target": encode_taska_target(section.header, section.body),
                }
            )
    return rows


def export_finetune_data(corpus: Corpus, subtask: str, out_dir: str | Path) -> dict:
    """Write <split>.jsonl files plus hyperparameters.json; returns file paths."""
    subtask = subtask.upper()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, str] = {}
    for split in (Split.TRAIN, Split.VALIDATION, Split.TEST):
        rows = export_rows(corpus, subtask, split)
        if not rows:
            continue
        path = out_dir / f"{split.value}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        written[split.value] = str(path)

    manifest = TASKA_HYPERPARAMETERS if subtask == "A" else TASKB_HYPERPARAMETERS
    manifest_path = out_dir / "hyperparameters.json"
    manifest_path.write_text(
        json.dumps({"subtask": subtask, "hyperparameters": manifest}, indent=2),
        encoding="utf-8",
    )
    written["hyperparameters"] = str(manifest_path)
    return written
