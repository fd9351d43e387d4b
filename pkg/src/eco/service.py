"""HTTP/JSON annotation service: a FastAPI app over AnnotationSession.

Mutations on one session are serialized through its lock; reads are free.
Image bytes are served as-is from the bundle directory for the browser UI.
"""

from __future__ import annotations

import itertools
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .annotation import FACES, AnnotationSession
from .errors import EcoError
from .geometry import load_bundle


class CreateSessionRequest(BaseModel):
    bundle_path: str


class SessionInfo(BaseModel):
    session_id: int
    frames: list[str]
    width: int
    height: int


class VpsRequest(BaseModel):
    frame_id: str
    vp_x: tuple[float, float]
    vp_y: tuple[float, float]


class AxesResponse(BaseModel):
    x_dir: list[float]
    y_dir: list[float]
    gravity: list[float]


class OriginRequest(BaseModel):
    frame_a: str
    px_a: tuple[float, float]
    frame_b: str
    px_b: tuple[float, float]


class OriginResponse(BaseModel):
    origin: list[float]


class CreateBoxRequest(BaseModel):
    category: str
    origin: list[float] | None = None
    extents: list[float] | None = None


class BoxState(BaseModel):
    box_id: int
    category: str
    origin: list[float]
    extents: list[float]


class MoveFaceRequest(BaseModel):
    face: str
    delta: float


class FacePolygon(BaseModel):
    face: str
    polygon: list[list[float]]


class ProjectionResponse(BaseModel):
    visible: bool
    corners: list[list[float] | None]
    faces: list[FacePolygon]


def create_app(preload_bundle=None) -> FastAPI:
    app = FastAPI(title="eco annotation service")
    sessions: dict[int, AnnotationSession] = {}
    session_dirs: dict[int, Path] = {}
    counter = itertools.count()

    if preload_bundle is not None:
        path = Path(preload_bundle)
        sessions[next(counter)] = AnnotationSession(load_bundle(path))
        session_dirs[0] = path.parent

    def get_session(session_id: int) -> AnnotationSession:
        if session_id not in sessions:
            raise HTTPException(404, f"no session {session_id}")
        return sessions[session_id]

    @app.exception_handler(EcoError)
    def eco_error_handler(request, exc: EcoError):
        return JSONResponse(status_code=400,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.post("/session", response_model=SessionInfo)
    def create_session(req: CreateSessionRequest):
        path = Path(req.bundle_path)
        if not path.exists():
            raise HTTPException(404, f"bundle not found: {path}")
        bundle = load_bundle(path)
        session_id = next(counter)
        sessions[session_id] = AnnotationSession(bundle)
        session_dirs[session_id] = path.parent
        return _session_info(session_id, sessions[session_id])

    def _session_info(session_id, session):
        intr = session.bundle.intrinsics
        return SessionInfo(session_id=session_id,
                           frames=[f.id for f in session.bundle.frames],
                           width=intr.width, height=intr.height)

    @app.get("/sessions")
    def list_sessions():
        return [_session_info(i, s) for i, s in sessions.items()]

    @app.get("/session/{session_id}", response_model=SessionInfo)
    def session_info(session_id: int):
        return _session_info(session_id, get_session(session_id))

    @app.get("/session/{session_id}/frame/{frame_id}/image")
    def frame_image(session_id: int, frame_id: str):
        session = get_session(session_id)
        try:
            frame = session.bundle.frame(frame_id)
        except KeyError:
            raise HTTPException(404, f"no frame {frame_id}")
        path = session_dirs[session_id] / frame.image_path
        if not path.exists():
            raise HTTPException(404, f"image missing: {path}")
        return FileResponse(path)

    @app.post("/session/{session_id}/vps", response_model=AxesResponse)
    def set_vps(session_id: int, req: VpsRequest):
        session = get_session(session_id)
        with session.lock:
            try:
                axes = session.set_vanishing_points(req.frame_id, req.vp_x, req.vp_y)
            except KeyError as e:
                raise HTTPException(404, f"no frame {e}")
        return AxesResponse(x_dir=list(axes.x_dir), y_dir=list(axes.y_dir),
                            gravity=list(axes.gravity))

    @app.post("/session/{session_id}/origin", response_model=OriginResponse)
    def set_origin(session_id: int, req: OriginRequest):
        session = get_session(session_id)
        with session.lock:
            try:
                origin = session.triangulate_origin(req.frame_a, req.px_a,
                                                    req.frame_b, req.px_b)
            except KeyError as e:
                raise HTTPException(404, f"no frame {e}")
        return OriginResponse(origin=[float(x) for x in origin])

    @app.post("/session/{session_id}/box", response_model=BoxState)
    def create_box(session_id: int, req: CreateBoxRequest):
        session = get_session(session_id)
        with session.lock:
            box_id = session.create_box(req.category, extents=req.extents,
                                        origin=req.origin)
        return _box_state(session, box_id)

    def _box_state(session, box_id) -> BoxState:
        box = session.boxes[box_id]
        return BoxState(box_id=box_id, category=box.category,
                        origin=[float(x) for x in box.origin],
                        extents=[float(x) for x in box.extents])

    @app.post("/session/{session_id}/box/{box_id}/move", response_model=BoxState)
    def move_face(session_id: int, box_id: int, req: MoveFaceRequest):
        session = get_session(session_id)
        if req.face not in FACES:
            raise HTTPException(422, f"face must be one of {FACES}")
        if box_id not in session.boxes:
            raise HTTPException(404, f"no box {box_id}")
        with session.lock:
            session.move_face(box_id, req.face, req.delta)
        return _box_state(session, box_id)

    @app.get("/session/{session_id}/box/{box_id}/project/{frame_id}",
             response_model=ProjectionResponse)
    def project_box(session_id: int, box_id: int, frame_id: str):
        session = get_session(session_id)
        if box_id not in session.boxes:
            raise HTTPException(404, f"no box {box_id}")
        try:
            proj = session.project_box(box_id, frame_id)
        except KeyError:
            raise HTTPException(404, f"no frame {frame_id}")
        return proj

    @app.post("/session/{session_id}/box/{box_id}/propagate")
    def propagate(session_id: int, box_id: int):
        session = get_session(session_id)
        if box_id not in session.boxes:
            raise HTTPException(404, f"no box {box_id}")
        return session.propagate(box_id)

    @app.get("/session/{session_id}/export")
    def export(session_id: int):
        return get_session(session_id).export()

    return app
