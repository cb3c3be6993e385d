"""Ablation grid over the example-selection strategy space.

Runs the full pipeline once per cell of (strategy x content mode x source
filter x shot count) and tabulates one score per cell. Zero-shot collapses
the strategy/mode/filter distinctions, so it executes once and is reported in
a single cell with dashes elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import Corpus, Split
from .evaluation import evaluate_run
from .generation import PipelineConfig, run_batch
from .selection import SelectionConfig

STRATEGIES = ("random", "similar")
CONTENT_MODES = ("pairs", "notes_only")
FILTERS = (False, True)
SHOTS = (0, 1, 2, 3)

SCORE_COLUMN = "rouge1_f1"  # aggregate average needs a neural scorer


@dataclass
class AblationCell:
    strategy: str
    content_mode: str
    filtered: bool
    k: int
    score: float | None = None
    status: str = "ok"  # ok | failed | collapsed
    error: str = ""

    def key(self) -> str:
        filt = "filtered" if self.filtered else "unfiltered"
        return f"{self.strategy}/{self.content_mode}/{filt}/{self.k}-shot"


@dataclass
class AblationTable:
    cells: list[AblationCell] = field(default_factory=list)
    zero_shot_score: float | None = None
    zero_shot_error: str = ""
    score_column: str = SCORE_COLUMN

    def populated(self) -> list[AblationCell]:
        return [c for c in self.cells if c.status == "ok"]

    def to_dict(self) -> dict:
        return {
            "score_column": self.score_column,
            "zero_shot_score": self.zero_shot_score,
            "zero_shot_error": self.zero_shot_error,
            "cells": [
                {
                    "strategy": c.strategy,
                    "content_mode": c.content_mode,
                    "filtered": c.filtered,
                    "k": c.k,
                    "score": c.score,
                    "status": c.status,
                    "error": c.error,
                }
                for c in self.cells
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AblationTable":
        table = cls(
            zero_shot_score=data.get("zero_shot_score"),
            zero_shot_error=data.get("zero_shot_error", ""),
            score_column=data.get("score_column", SCORE_COLUMN),
        )
        table.cells = [AblationCell(**cell) for cell in data.get("cells", [])]
        return table


def _cell_score(
    corpus: Corpus,
    split: Split,
    config: PipelineConfig,
    parallelism: int,
    scorer=None,
) -> float:
    notes, _ = run_batch(corpus, split, config, parallelism=parallelism)
    references = {e.id: e.note_raw for e in corpus.split(split)}
    hypotheses = {note.example_id: note.text for note in notes}
    report = evaluate_run(references, hypotheses, corpus.taxonomy, scorer=scorer)
    column = "average" if "average" in report.aggregate else SCORE_COLUMN
    return report.aggregate[column]


def run_ablation(
    corpus: Corpus,
    base_config: PipelineConfig,
    split: Split | str = Split.VALIDATION,
    parallelism: int = 1,
    scorer=None,
) -> AblationTable:
    """One pipeline run per grid cell; failures mark the cell, not the grid."""
    split = Split(split)
    table = AblationTable()

    zero_config = replace(
        base_config,
        selection=SelectionConfig(
            strategy="random", k=0, content_mode="notes_only",
            filter_by_source=False, seed=base_config.seed,
        ),
    )
    try:
        table.zero_shot_score = _cell_score(corpus, split, zero_config, parallelism, scorer)
    except Exception as exc:
        table.zero_shot_error = f"{type(exc).__name__}: {exc}"

    for strategy in STRATEGIES:
        for mode in CONTENT_MODES:
            for filtered in FILTERS:
                for k in SHOTS:
                    if k == 0:
                        table.cells.append(
                            AblationCell(strategy, mode, filtered, 0,
                                         score=table.zero_shot_score, status="collapsed")
                        )
                        continue
                    selection = SelectionConfig(
                        strategy=strategy,
                        k=k,
                        content_mode=mode,
                        filter_by_source=filtered,
                        seed=base_config.seed,
                    )
                    config = replace(base_config, selection=selection)
                    cell = AblationCell(strategy, mode, filtered, k)
                    try:
                        cell.score = _cell_score(corpus, split, config, parallelism, scorer)
                    except Exception as exc:
                        cell.status = "failed"
                        cell.error = f"{type(exc).__name__}: {exc}"
                    table.cells.append(cell)
    return table


def format_ablation_table(table: AblationTable) -> str:
    """Rows: strategy x content mode; columns: shot count, unfiltered then filtered."""
    def fmt(cell: AblationCell) -> str:
        if cell.status == "failed":
            return "FAIL"
        if cell.status == "collapsed":
            return "--"
        return f"{cell.score * 100:.1f}" if cell.score is not None else "--"

    by_key = {(c.strategy, c.content_mode, c.filtered, c.k): c for c in table.cells}
    header = ["strategy/mode".ljust(22)]
    for filtered in FILTERS:
        tag = "filt" if filtered else "unf"
        header += [f"{tag}-{k}s".rjust(8) for k in SHOTS]
    lines = ["".join(header)]
    zero = f"{table.zero_shot_score * 100:.1f}" if table.zero_shot_score is not None else "FAIL"
    lines.append(f"0-shot (strategy/mode independent): {zero}")
    for strategy in STRATEGIES:
        for mode in CONTENT_MODES:
            row = [f"{strategy}/{mode}".ljust(22)]
            for filtered in FILTERS:
                for k in SHOTS:
                    row.append(fmt(by_key[(strategy, mode, filtered, k)]).rjust(8))
            lines.append("".join(row))
    lines.append(f"score column: {table.score_column} (percent)")
    return "\n".join(lines)


def save_ablation_table(table: AblationTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table.to_dict(), indent=2), encoding="utf-8")


def load_ablation_table(path: str | Path) -> AblationTable:
    return AblationTable.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
