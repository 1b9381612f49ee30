"""HTTP job service: submit compose jobs, poll status, fetch result frames.

Jobs run on a single FIFO worker thread; all job metadata goes through
one lock-guarded store so concurrent requests never race the worker.
"""
from __future__ import annotations

import json
import os
import queue
import threading
import traceback
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from . import pipeline, video
from .checkpoint import load_checkpoint
from .control import ControlSpec
from .errors import GencompError, InvalidInputError

# Forward-only lifecycle; index encodes the order.
_STATUS_ORDER = ("queued", "running", "done", "failed")


def data_root(override: str | None = None) -> Path:
    if override:
        return Path(override)
    return Path(os.environ.get("GENCOMP_DATA_DIR", "gencomp_data"))


@dataclass
class Job:
    id: str
    background: str
    foreground: str
    control: ControlSpec
    checkpoint: str
    steps: int
    seed: int
    fg_mask: str | None = None
    status: str = "queued"
    result_path: str | None = None
    error: str | None = None

    def public(self) -> dict:
        out = {"id": self.id, "status": self.status, "result_path": self.result_path}
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class JobStore:
    """Single serialized owner of job metadata."""

    _jobs: dict[str, Job] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def add(self, job: Job) -> None:
        with self._lock:
            self._jobs[job.id] = job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def set_status(self, job_id: str, status: str, result_path: str | None = None,
                   error: str | None = None) -> None:
        with self._lock:
            job = self._jobs[job_id]
            if _STATUS_ORDER.index(status) <= _STATUS_ORDER.index(job.status):
                raise RuntimeError(f"status may only move forward: {job.status} -> {status}")
            job.status = status
            if result_path is not None:
                job.result_path = result_path
            if error is not None:
                job.error = error


class Worker:
    """FIFO executor: one thread, one job at a time."""

    def __init__(self, store: JobStore, out_root: Path):
        self.store = store
        self.out_root = out_root
        self.q: queue.Queue[str | None] = queue.Queue()
        self._models: dict[str, tuple] = {}
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def submit(self, job_id: str) -> None:
        self.q.put(job_id)

    def stop(self) -> None:
        self.q.put(None)
        self._thread.join(timeout=10)

    def _model_for(self, ckpt_path: str):
        if ckpt_path not in self._models:
            model, meta = load_checkpoint(ckpt_path)
            self._models[ckpt_path] = (model, meta)
        return self._models[ckpt_path]

    def _run(self) -> None:
        while True:
            job_id = self.q.get()
            if job_id is None:
                return
            job = self.store.get(job_id)
            if job is None:
                continue
            self.store.set_status(job_id, "running")
            try:
                result_dir = self._execute(job)
                self.store.set_status(job_id, "done", result_path=str(result_dir))
            except GencompError as exc:
                self.store.set_status(job_id, "failed", error=str(exc))
            except Exception:
                self.store.set_status(job_id, "failed", error="internal error")
                traceback.print_exc()

    def _execute(self, job: Job) -> Path:
        bg = video.load_video(job.background)
        fg = video.load_video(job.foreground)
        fg_mask = None
        if job.fg_mask is not None:
            fg_mask = video.load_video(job.fg_mask, as_mask=True)
        model, meta = self._model_for(job.checkpoint)
        result = pipeline.compose(
            bg, fg, job.control, model,
            steps=job.steps, seed=job.seed, fg_mask=fg_mask,
            schedule_kind=meta.get("schedule_kind", "linear"),
        )
        out_dir = self.out_root / "jobs" / job.id / "output"
        video.write_frames(result.output, out_dir)
        video.write_raw_tensor(result.output, self.out_root / "jobs" / job.id / "output.gctv")
        return out_dir


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": message})


def _ui_dir() -> Path | None:
    env = os.environ.get("GENCOMP_UI_DIR")
    if env:
        p = Path(env)
        return p if p.is_dir() else None
    p = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return p if p.is_dir() else None


def create_app(checkpoint: str | None = None, data_dir: str | None = None) -> FastAPI:
    """Build the service. `checkpoint` is the default model for jobs that
    do not name their own."""
    root = data_root(data_dir)
    root.mkdir(parents=True, exist_ok=True)
    store = JobStore()
    worker = Worker(store, root)
    app = FastAPI(title="gencomp")
    app.state.store = store
    app.state.worker = worker

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/jobs/compose")
    async def submit_compose(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _bad_request("body is not valid JSON")
        if not isinstance(body, dict):
            return _bad_request("body must be a JSON object")

        for name in ("background", "foreground"):
            value = body.get(name)
            if not isinstance(value, str) or not value:
                return _bad_request(f"{name}: required path string")
            if not Path(value).exists():
                return _bad_request(f"{name}: no such file or directory: {value}")

        ckpt = body.get("checkpoint", checkpoint)
        if not isinstance(ckpt, str) or not ckpt:
            return _bad_request("checkpoint: required (no server default configured)")
        if not Path(ckpt).exists():
            return _bad_request(f"checkpoint: no such file: {ckpt}")

        raw_control = body.get("control")
        if raw_control is None:
            return _bad_request("control: required")
        try:
            if isinstance(raw_control, str):
                control = ControlSpec.from_json(raw_control)
            else:
                control = ControlSpec.from_json(json.dumps(raw_control))
            control.validate()
        except (InvalidInputError, ValueError) as exc:
            return _bad_request(f"control: {exc}")

        steps = body.get("steps", pipeline.DEFAULT_STEPS)
        seed = body.get("seed", 0)
        if not isinstance(steps, int) or steps < 1:
            return _bad_request("steps: must be a positive integer")
        if not isinstance(seed, int):
            return _bad_request("seed: must be an integer")
        fg_mask = body.get("fg_mask")
        if fg_mask is not None:
            if not isinstance(fg_mask, str) or not Path(fg_mask).exists():
                return _bad_request(f"fg_mask: no such file or directory: {fg_mask}")

        job = Job(
            id=uuid.uuid4().hex,
            background=body["background"],
            foreground=body["foreground"],
            control=control,
            checkpoint=ckpt,
            steps=steps,
            seed=seed,
            fg_mask=fg_mask,
        )
        store.add(job)
        worker.submit(job.id)
        return {"id": job.id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = store.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown job: {job_id}"})
        return job.public()

    @app.get("/videos/{job_id}/frame/{n}")
    def video_frame(job_id: str, n: int):
        job = store.get(job_id)
        if job is None:
            return JSONResponse(status_code=404, content={"detail": f"unknown job: {job_id}"})
        if job.status != "done" or job.result_path is None:
            return JSONResponse(status_code=404,
                                content={"detail": f"job {job_id} has no result (status={job.status})"})
        frame = Path(job.result_path) / f"frame_{n:05d}.png"
        if n < 0 or not frame.exists():
            return JSONResponse(status_code=404, content={"detail": f"no frame {n} for job {job_id}"})
        return FileResponse(frame, media_type="image/png")

    ui = _ui_dir()
    if ui is not None:
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app


def serve(port: int = 8000, checkpoint: str | None = None, data_dir: str | None = None,
          host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(checkpoint=checkpoint, data_dir=data_dir)
    uvicorn.run(app, host=host, port=port)
