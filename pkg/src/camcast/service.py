"""HTTP service backing the browser labeling tool.

Serves study items one at a time per examiner, records judgments to an
append-only JSON-lines file through a single writer, and reports the live
confusion matrix. Item payloads carry no truth labels, timestamps, or lead
times; those stay in the sealed truth file that only the report endpoint
reads.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Query, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .evaluation import (
    ASSIGNMENTS_FILE_NAME,
    QUESTION_TEXT,
    TRUTH_FILE_NAME,
    TRUTH_LABELS,
    JudgmentRecord,
    aggregate_confusion,
    append_judgment,
    now_utc,
    read_assignments,
    read_items_manifest,
    read_judgments,
    read_truth,
)


@dataclass
class ServiceConfig:
    """Paths the labeling service works against.

    The sealed truth file and the assignment map default to siblings of the
    items manifest (truth.json, assignments.json).
    """

    items_manifest: Path
    judgments_path: Path
    static_dir: Path | None = None
    truth_path: Path | None = None
    assignments_path: Path | None = None

    def __post_init__(self) -> None:
        self.items_manifest = Path(self.items_manifest)
        self.judgments_path = Path(self.judgments_path)
        base = self.items_manifest.parent
        self.truth_path = Path(self.truth_path) if self.truth_path else base / TRUTH_FILE_NAME
        self.assignments_path = (
            Path(self.assignments_path) if self.assignments_path else base / ASSIGNMENTS_FILE_NAME
        )
        if self.static_dir is not None:
            self.static_dir = Path(self.static_dir)

    def validate(self) -> None:
        for label, path in (
            ("items manifest", self.items_manifest),
            ("truth file", self.truth_path),
            ("assignments file", self.assignments_path),
        ):
            if not path.exists():
                raise FileNotFoundError(f"{label} not found: {path}")
        if self.static_dir is not None and not self.static_dir.is_dir():
            raise FileNotFoundError(f"static asset directory not found: {self.static_dir}")


class JudgmentBody(BaseModel):
    item_id: str
    examiner_id: str
    judged: str
    decided_at: str | None = None


def create_app(config: ServiceConfig) -> FastAPI:
    config.validate()
    manifest = read_items_manifest(config.items_manifest)
    image_by_item = {
        entry["item_id"]: config.items_manifest.parent / entry["image"] for entry in manifest
    }
    assignments = read_assignments(config.assignments_path)
    write_lock = threading.Lock()

    app = FastAPI(title="camcast labeling service")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, err: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    def judged_items(examiner_id: str) -> set[str]:
        return {
            record.item_id
            for record in read_judgments(config.judgments_path)
            if record.examiner_id == examiner_id
        }

    @app.get("/api/items/next")
    def next_item(examiner: str = Query(...)):
        assigned = assignments.get(examiner)
        if assigned is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown examiner {examiner!r}"})
        done = judged_items(examiner)
        progress = {"judged": len(done & set(assigned)), "assigned": len(assigned)}
        for item_id in assigned:
            if item_id not in done:
                return {
                    "item_id": item_id,
                    "image_url": f"/img/{item_id}",
                    "question": QUESTION_TEXT,
                    "progress": progress,
                }
        return Response(
            status_code=204,
            headers={
                "X-Progress-Judged": str(progress["judged"]),
                "X-Progress-Assigned": str(progress["assigned"]),
            },
        )

    @app.post("/api/judgments", status_code=201)
    def post_judgment(body: JudgmentBody):
        if body.judged not in TRUTH_LABELS:
            return JSONResponse(
                status_code=400,
                content={"detail": f"judged must be one of {list(TRUTH_LABELS)}"},
            )
        assigned = assignments.get(body.examiner_id, [])
        if body.item_id not in assigned:
            return JSONResponse(
                status_code=409,
                content={"detail": f"item {body.item_id!r} is not assigned to {body.examiner_id!r}"},
            )
        from .descriptors import parse_utc

        decided_at = parse_utc(body.decided_at) if body.decided_at else now_utc()
        record = JudgmentRecord(
            item_id=body.item_id,
            examiner_id=body.examiner_id,
            judged=body.judged,
            decided_at=decided_at,
        )
        with write_lock:
            append_judgment(config.judgments_path, record)
        return {"status": "recorded", "item_id": body.item_id}

    @app.get("/api/report")
    def report():
        truth = read_truth(config.truth_path)
        matrix = aggregate_confusion(read_judgments(config.judgments_path), truth)
        return {
            "labels": list(TRUTH_LABELS),
            "counts": matrix.counts.tolist(),
            "total": matrix.total,
            "accuracy": matrix.accuracy,
        }

    @app.get("/img/{item_id}")
    def item_image(item_id: str):
        path = image_by_item.get(item_id)
        if path is None or not path.exists():
            return JSONResponse(status_code=404, content={"detail": f"unknown item {item_id!r}"})
        return FileResponse(path, media_type="image/png")

    if config.static_dir is not None:
        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="ui")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return (
                "<html><body><p>camcast labeling service is running; "
                "no UI assets configured.</p></body></html>"
            )

    return app


def run_service(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
