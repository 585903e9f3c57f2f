"""HTTP service exposing prediction and interactive grasp refinement.

Serves a built dataset read-only (samples, images) plus mutable
refinement sessions. Every response that carries a pose also carries the
overlay rectangle computed from that same pose by the geometry core, so
the UI never re-derives grasp geometry on its own. Refinements on one
session are serialized with reject-on-conflict (HTTP 409) rather than
queueing, keeping conversation order unambiguous.
"""

from __future__ import annotations

import base64
import logging
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from pydantic import BaseModel

from . import client as client_mod
from .client import ModelClient, RefinementSession, TransportError, record_reply, save_session
from .cornell import FoldAssignment
from .geometry import GraspPose, pose_to_rect
from .parsing import ParsedOutput, parse_pose
from .templates import DatasetRecord, load_dataset_records, render_pose_text

logger = logging.getLogger(__name__)

DEFAULT_INSTRUCTION = ("How should the robot grasp the object in this image? "
                       "Answer with a grasp pose.")

# display defaults for the overlay rectangle; the real gripper opening is
# robot-specific, so deployments override these
DEFAULT_OVERLAY_W = 150.0
DEFAULT_OVERLAY_PLATE = 60.0


class PredictBody(BaseModel):
    image_id: str | None = None
    image_b64: str | None = None
    instruction: str | None = None


class SessionBody(BaseModel):
    image_id: str
    instruction: str | None = None


class RefineBody(BaseModel):
    message: str


@dataclass
class ServiceState:
    image_root: Path
    sessions_dir: Path
    model: "ServiceModel"
    records: dict[str, DatasetRecord] = field(default_factory=dict)
    folds: FoldAssignment | None = None
    overlay_w: float = DEFAULT_OVERLAY_W
    overlay_plate: float = DEFAULT_OVERLAY_PLATE
    sessions: dict[str, RefinementSession] = field(default_factory=dict)
    locks: dict[str, threading.Lock] = field(default_factory=dict)
    dims_cache: dict[str, tuple[int, int]] = field(default_factory=dict)
    _registry_lock: threading.Lock = field(default_factory=threading.Lock)

    def lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self.locks.setdefault(session_id, threading.Lock())


def build_state(
    image_root: str | Path,
    sessions_dir: str | Path,
    model: "ServiceModel",
    dataset_path: str | Path | None = None,
    folds_path: str | Path | None = None,
    overlay_w: float = DEFAULT_OVERLAY_W,
    overlay_plate: float = DEFAULT_OVERLAY_PLATE,
) -> ServiceState:
    records = {}
    if dataset_path:
        records = {r.id: r for r in load_dataset_records(dataset_path)}
    folds = None
    if folds_path:
        folds = FoldAssignment.from_json(Path(folds_path).read_text(encoding="utf-8"))
    return ServiceState(
        image_root=Path(image_root),
        sessions_dir=Path(sessions_dir),
        model=model,
        records=records,
        folds=folds,
        overlay_w=overlay_w,
        overlay_plate=overlay_plate,
    )


# ---------------------------------------------------------------------------
# model adapters
# ---------------------------------------------------------------------------


class ServiceModel:
    """What the service needs from a model: one-shot and continued chat."""

    def initial_predict(self, image_bytes: bytes, instruction: str,
                        sample_id: str | None) -> str:
        raise NotImplementedError

    def continue_chat(self, session: RefinementSession, user_message: str) -> str:
        raise NotImplementedError


class LiveServiceModel(ServiceModel):
    def __init__(self, model_client: ModelClient):
        self._client = model_client

    def initial_predict(self, image_bytes, instruction, sample_id=None) -> str:
        return self._client.predict(image_bytes, instruction)

    def continue_chat(self, session, user_message) -> str:
        raw, _ = client_mod.refine(self._client, session, user_message)
        return raw


class MockServiceModel(ServiceModel):
    """Deterministic stand-in: answers with known poses, nudges on refine.

    Initial predictions echo the dataset's target pose for known sample
    ids (center pose otherwise). Refinement messages move the latest pose
    by a fixed step per direction keyword, or rotate it, which is enough
    to drive the UI and its tests without any endpoint.
    """

    STEP = 0.1
    ROT_STEP = 0.3

    def __init__(self, gt_poses: dict[str, GraspPose] | None = None,
                 scripted: list[str] | None = None):
        self._gt = gt_poses or {}
        self._scripted = list(scripted) if scripted else None

    def initial_predict(self, image_bytes, instruction, sample_id=None) -> str:
        pose = self._gt.get(sample_id, GraspPose(0.5, 0.5, 0.0))
        return (f"The object offers a stable section for a parallel gripper.\n\n"
                f"The grasp pose is {render_pose_text(pose)}.")

    def continue_chat(self, session, user_message) -> str:
        if self._scripted is not None:
            if not self._scripted:
                return "I have no further refinements to offer."
            return self._scripted.pop(0)
        last = next((t.pose for t in reversed(session.turns) if t.pose is not None), None)
        if last is None:
            last = GraspPose(0.5, 0.5, 0.0)
        x, y, theta = last.x, last.y, last.theta
        msg = user_message.lower()
        if "left" in msg:
            x -= self.STEP
        if "right" in msg:
            x += self.STEP
        if "up" in msg or "top" in msg:
            y -= self.STEP
        if "down" in msg or "bottom" in msg:
            y += self.STEP
        if "rotate" in msg or "turn" in msg:
            theta += self.ROT_STEP
        pose = GraspPose(min(max(x, 0.0), 1.0), min(max(y, 0.0), 1.0), theta)
        return f"Adjusted as requested.\n\nThe grasp pose is {render_pose_text(pose)}."


# ---------------------------------------------------------------------------
# response assembly
# ---------------------------------------------------------------------------


def overlay_rect(pose: GraspPose, img_w: int, img_h: int,
                 overlay_w: float, overlay_plate: float) -> list[list[float]]:
    rect = pose_to_rect(pose, overlay_w, overlay_plate, img_w, img_h)
    return [[float(x), float(y)] for x, y in rect.vertices]


def _pose_dict(pose: GraspPose | None) -> dict | None:
    if pose is None:
        return None
    return {"x": pose.x, "y": pose.y, "theta": pose.theta}


def _prediction_payload(state: ServiceState, parsed: ParsedOutput, raw: str,
                        img_w: int, img_h: int) -> dict:
    overlay = None
    if parsed.pose is not None:
        overlay = overlay_rect(parsed.pose, img_w, img_h, state.overlay_w, state.overlay_plate)
    return {
        "reasoning": parsed.reasoning_text,
        "pose": _pose_dict(parsed.pose),
        "raw": raw,
        "overlay": overlay,
        "diagnostics": parsed.diagnostics,
        "image_size": [img_w, img_h],
    }


def _session_overlays(state: ServiceState, session: RefinementSession,
                      img_w: int, img_h: int) -> list[dict]:
    posed = [t for t in session.turns if t.role == "assistant" and t.pose is not None]
    overlays = []
    for i, turn in enumerate(posed):
        if i == 0:
            role = "initial"
        elif i == len(posed) - 1:
            role = "latest"
        else:
            role = "intermediate"
        overlays.append({
            "pose": _pose_dict(turn.pose),
            "rect": overlay_rect(turn.pose, img_w, img_h, state.overlay_w, state.overlay_plate),
            "role": role,
        })
    return overlays


def _session_payload(state: ServiceState, session: RefinementSession) -> dict:
    img_w, img_h = _image_dims(state, session.image_id)
    last = session.turns[-1] if session.turns else None
    parsed_like = ParsedOutput(
        pose=last.pose if last is not None else None,
        reasoning_text=parse_pose(last.text).reasoning_text if last is not None else "",
        matched_span=None,
    )
    payload = _prediction_payload(state, parsed_like, last.text if last else "", img_w, img_h)
    payload.update({
        "session_id": session.session_id,
        "image_id": session.image_id,
        "history": [
            {"role": t.role, "text": t.text, "pose": _pose_dict(t.pose)}
            for t in session.turns
        ],
        "overlays": _session_overlays(state, session, img_w, img_h),
    })
    return payload


# ---------------------------------------------------------------------------
# image resolution
# ---------------------------------------------------------------------------


def _image_path(state: ServiceState, image_id: str) -> Path:
    record = state.records.get(image_id)
    if record is not None:
        return state.image_root / record.image
    for candidate in (state.image_root / f"{image_id}.png",
                      state.image_root / f"{image_id}r.png"):
        if candidate.exists():
            return candidate
    raise HTTPException(status_code=404, detail=f"unknown image id {image_id!r}")


def _image_bytes(state: ServiceState, image_id: str) -> bytes:
    path = _image_path(state, image_id)
    if not path.exists():
        raise HTTPException(status_code=404, detail=f"image file missing for {image_id!r}")
    return path.read_bytes()


def _image_dims(state: ServiceState, image_id: str) -> tuple[int, int]:
    if image_id in state.dims_cache:
        return state.dims_cache[image_id]
    data = _image_bytes(state, image_id)
    img = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise HTTPException(status_code=500, detail=f"cannot decode image {image_id!r}")
    dims = (int(img.shape[1]), int(img.shape[0]))
    state.dims_cache[image_id] = dims
    return dims


# ---------------------------------------------------------------------------
# app factory
# ---------------------------------------------------------------------------


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="textgrasp service")
    app.state.service = state
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/api/samples")
    def samples(fold: int | None = None):
        rows = []
        for rec in state.records.values():
            source = rec.augmentation.get("source_image", rec.id)
            rec_fold = None
            if state.folds is not None:
                rec_fold = state.folds.assignment.get(source,
                                                      state.folds.assignment.get(rec.id))
            if fold is not None and rec_fold != fold:
                continue
            rows.append({"id": rec.id, "image": rec.image, "category": rec.category,
                         "fold": rec_fold})
        rows.sort(key=lambda r: r["id"])
        return {"samples": rows}

    @app.get("/api/image/{image_id}")
    def image(image_id: str):
        return Response(content=_image_bytes(state, image_id), media_type="image/png")

    @app.post("/api/predict")
    def predict(body: PredictBody):
        if body.image_id:
            image_id = body.image_id
            data = _image_bytes(state, image_id)
            img_w, img_h = _image_dims(state, image_id)
        elif body.image_b64:
            try:
                data = base64.b64decode(body.image_b64)
            except Exception as exc:
                raise HTTPException(status_code=400, detail=f"bad base64 image: {exc}")
            img = cv2.imdecode(np.frombuffer(data, np.uint8), cv2.IMREAD_UNCHANGED)
            if img is None:
                raise HTTPException(status_code=400, detail="cannot decode uploaded image")
            image_id = None
            img_w, img_h = int(img.shape[1]), int(img.shape[0])
        else:
            raise HTTPException(status_code=400, detail="provide image_id or image_b64")
        instruction = body.instruction or DEFAULT_INSTRUCTION
        try:
            raw = state.model.initial_predict(data, instruction, image_id)
        except TransportError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        return _prediction_payload(state, parse_pose(raw), raw, img_w, img_h)

    @app.post("/api/session")
    def open_session(body: SessionBody):
        data = _image_bytes(state, body.image_id)
        instruction = body.instruction or DEFAULT_INSTRUCTION
        session_id = uuid.uuid4().hex[:12]
        session = client_mod.new_session(session_id, _image_path(state, body.image_id),
                                         instruction, image_id=body.image_id)
        try:
            raw = state.model.initial_predict(data, instruction, body.image_id)
        except TransportError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        _, session = record_reply(session, raw)
        state.sessions[session_id] = session
        save_session(session, state.sessions_dir)
        return _session_payload(state, session)

    @app.post("/api/session/{session_id}/refine")
    def refine_session(session_id: str, body: RefineBody):
        session = _get_session(state, session_id)
        lock = state.lock_for(session_id)
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409,
                                detail="a refinement is already in progress for this session")
        try:
            try:
                raw = state.model.continue_chat(session, body.message)
            except TransportError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            session = session.extended(client_mod.Turn("user", body.message))
            _, session = record_reply(session, raw)
            state.sessions[session_id] = session
            save_session(session, state.sessions_dir)
        finally:
            lock.release()
        return _session_payload(state, session)

    @app.get("/api/session/{session_id}")
    def get_session(session_id: str):
        return _session_payload(state, _get_session(state, session_id))

    return app


def _get_session(state: ServiceState, session_id: str) -> RefinementSession:
    session = state.sessions.get(session_id)
    if session is None:
        path = state.sessions_dir / f"{session_id}.json"
        if path.exists():
            session = client_mod.load_session(state.sessions_dir, session_id)
            state.sessions[session_id] = session
    if session is None:
        raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
    return session
