"""HTTP service for the blinded annotation study.

Endpoints:
  GET  /api/study            study id, instructions, task count
  GET  /api/tasks/next       next unannotated task for an annotator, or done
  POST /api/annotations      submit one AnnotationRecord
  GET  /api/results          tallies and win rates; 403 while the study is open

The optional UI bundle directory is mounted at / when present.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .humaneval import (
    AnnotationRecord,
    DuplicateAnnotationError,
    StudyClosedError,
    StudyError,
    StudyStore,
    UnknownTaskError,
    format_results_table,
    record_annotation,
    unblind_and_tally,
    win_rate,
)


class AnnotationIn(BaseModel):
    annotator_id: str
    task_id: str
    choice: str


def create_app(store: StudyStore, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="notegen annotation study")
    write_lock = threading.Lock()  # appends are serialized; reads stay concurrent

    @app.get("/api/study")
    def get_study() -> dict:
        study = store.load()
        return {
            "study_id": study.study_id,
            "instructions_text": study.instructions_text,
            "task_count": len(study.tasks),
        }

    @app.get("/api/tasks/next")
    def next_task(annotator: str) -> dict:
        if not annotator:
            raise HTTPException(status_code=422, detail="annotator id required")
        study = store.load()
        if not study.is_open:
            raise HTTPException(status_code=403, detail="study is closed")
        annotations = store.annotation_store()
        for index, task in enumerate(study.tasks):
            if not annotations.has(annotator, task.task_id):
                payload = task.to_payload()
                payload["progress"] = {"done": index, "total": len(study.tasks)}
                return payload
        return {"done": True, "total": len(study.tasks)}

    @app.post("/api/annotations", status_code=201)
    def post_annotation(body: AnnotationIn) -> dict:
        study = store.load()
        try:
            record = AnnotationRecord(
                annotator_id=body.annotator_id, task_id=body.task_id, choice=body.choice
            )
            with write_lock:
                return record_annotation(store.annotation_store(), study, record)
        except DuplicateAnnotationError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except UnknownTaskError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except StudyClosedError as exc:
            raise HTTPException(status_code=403, detail=str(exc)) from exc
        except StudyError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/api/results")
    def get_results() -> dict:
        study = store.load()
        if study.is_open:
            raise HTTPException(status_code=403, detail="results are sealed until the study closes")
        tally = unblind_and_tally(study, store.annotation_store().records())
        rates = win_rate(tally)
        return {
            "tally": tally.to_dict(),
            "win_rate": {
                "per_annotator": {a: r.to_dict() for a, r in rates["per_annotator"].items()},
                "overall": rates["overall"].to_dict(),
            },
            "table": format_results_table(tally, rates),
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
