"""Session-based geometry backend for 3D box labeling over a registered
frame batch. All mutations append to an edit log that replays to the
current state bit-exactly."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DegenerateAxesError, NumericError
from .geometry import (
    Bundle,
    Pose,
    SceneAxes,
    project,
    scene_axes_from_vps,
    triangulate,
)

FACES = ("+x", "-x", "+y", "-y", "+z", "-z")

# extents index and outward-normal sign per face; axis 2 is the gravity axis
_FACE_SLOT = {"-x": 0, "+x": 1, "-y": 2, "+y": 3, "-z": 4, "+z": 5}
_FACE_AXIS = {"-x": 0, "+x": 0, "-y": 1, "+y": 1, "-z": 2, "+z": 2}
_FACE_SIGN = {f: (+1.0 if f[0] == "+" else -1.0) for f in FACES}


@dataclass
class Cuboid:
    origin: np.ndarray
    axes: SceneAxes
    extents: np.ndarray  # [x_min, x_max, y_min, y_max, z_min, z_max]
    category: str = ""

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.extents = np.asarray(self.extents, dtype=float).reshape(6)
        for a in range(3):
            if self.extents[2 * a] >= self.extents[2 * a + 1]:
                raise ValueError(f"axis {a}: min extent must be below max extent")

    @property
    def axis_matrix(self) -> np.ndarray:
        return self.axes.as_matrix()  # rows: x_dir, y_dir, gravity

    def corners(self) -> np.ndarray:
        """8x3 world corners; bit i of the index selects max along axis i."""
        M = self.axis_matrix
        out = np.empty((8, 3))
        for idx in range(8):
            offs = [self.extents[2 * a + ((idx >> a) & 1)] for a in range(3)]
            out[idx] = self.origin + offs[0] * M[0] + offs[1] * M[1] + offs[2] * M[2]
        return out

    def face_corner_indices(self, face: str) -> list[int]:
        axis = _FACE_AXIS[face]
        bit = 1 if _FACE_SIGN[face] > 0 else 0
        idxs = [i for i in range(8) if ((i >> axis) & 1) == bit]
        # order as a closed quad: flip the middle pair of the lexicographic walk
        return [idxs[0], idxs[1], idxs[3], idxs[2]]

    def face_normal(self, face: str) -> np.ndarray:
        return _FACE_SIGN[face] * self.axis_matrix[_FACE_AXIS[face]]

    def face_center(self, face: str) -> np.ndarray:
        corners = self.corners()
        return corners[self.face_corner_indices(face)].mean(axis=0)

    def moved(self, face: str, delta: float) -> "Cuboid":
        extents = self.extents.copy()
        extents[_FACE_SLOT[face]] += delta
        return Cuboid(origin=self.origin.copy(), axes=self.axes,
                      extents=extents, category=self.category)


def project_cuboid(box: Cuboid, K, pose: Pose) -> dict:
    """Corner pixels plus visible-face polygons for one frame.

    A face is visible when its outward normal points toward the camera and
    all four of its corners have positive depth; if every corner is behind
    the camera the whole result is flagged not visible.
    """
    corners = box.corners()
    pixels: list[list[float] | None] = []
    depths = []
    for X in corners:
        depth = (pose.R @ (X - pose.C))[2]
        depths.append(depth)
        if depth > 1e-9:
            u, v = project(K, pose, X)
            pixels.append([u, v])
        else:
            pixels.append(None)
    visible_any = any(d > 1e-9 for d in depths)
    faces = []
    for face in FACES:
        idxs = box.face_corner_indices(face)
        in_front = all(depths[i] > 1e-9 for i in idxs)
        toward_camera = box.face_normal(face) @ (box.face_center(face) - pose.C) < 0
        if in_front and toward_camera:
            faces.append({"face": face, "polygon": [pixels[i] for i in idxs]})
    return {"visible": visible_any, "corners": pixels, "faces": faces}


class AnnotationSession:
    """One mutable labeling session per bundle; mutations are serialized."""

    def __init__(self, bundle: Bundle):
        self.bundle = bundle
        self.axes: SceneAxes | None = None
        self.boxes: dict[int, Cuboid] = {}
        self.last_origin: np.ndarray | None = None
        self.edit_log: list[dict] = []
        self._next_box = 0
        self.lock = threading.Lock()

    # -- mutations (each appends one replayable log entry) --

    def set_vanishing_points(self, frame_id: str, vp_x, vp_y) -> SceneAxes:
        frame = self.bundle.frame(frame_id)
        axes = scene_axes_from_vps(self.bundle.intrinsics, frame.pose, vp_x, vp_y)
        self.axes = axes
        self.edit_log.append({"op": "set_vps", "frame": frame_id,
                              "vp_x": list(map(float, vp_x)),
                              "vp_y": list(map(float, vp_y))})
        return axes

    def triangulate_origin(self, frame_a: str, px_a, frame_b: str, px_b) -> np.ndarray:
        pose_a = self.bundle.frame(frame_a).pose
        pose_b = self.bundle.frame(frame_b).pose
        origin = triangulate(px_a, pose_a, px_b, pose_b, self.bundle.intrinsics)
        self.last_origin = origin
        self.edit_log.append({"op": "origin", "frame_a": frame_a,
                              "px_a": list(map(float, px_a)),
                              "frame_b": frame_b,
                              "px_b": list(map(float, px_b))})
        return origin

    def create_box(self, category: str, extents=None, origin=None) -> int:
        if self.axes is None:
            raise DegenerateAxesError("set vanishing points before creating a box")
        if origin is None:
            if self.last_origin is None:
                raise NumericError("no triangulated origin available")
            origin = self.last_origin
        if extents is None:
            extents = [-0.5, 0.5, -0.5, 0.5, -0.5, 0.5]
        box = Cuboid(origin=np.asarray(origin, dtype=float), axes=self.axes,
                     extents=np.asarray(extents, dtype=float), category=category)
        box_id = self._next_box
        self._next_box += 1
        self.boxes[box_id] = box
        self.edit_log.append({"op": "create_box", "category": category,
                              "origin": [float(x) for x in box.origin],
                              "extents": [float(x) for x in box.extents]})
        return box_id

    def move_face(self, box_id: int, face: str, delta: float) -> Cuboid:
        if face not in FACES:
            raise ValueError(f"unknown face {face!r}")
        box = self.boxes[box_id]
        try:
            moved = box.moved(face, delta)
        except ValueError as e:
            raise NumericError(f"move rejected: {e}") from e
        self.boxes[box_id] = moved
        self.edit_log.append({"op": "move_face", "box": box_id,
                              "face": face, "delta": float(delta)})
        return moved

    # -- read-only --

    def project_box(self, box_id: int, frame_id: str) -> dict:
        box = self.boxes[box_id]
        frame = self.bundle.frame(frame_id)
        return project_cuboid(box, self.bundle.intrinsics, frame.pose)

    def propagate(self, box_id: int) -> dict[str, dict]:
        out = {}
        for frame in self.bundle.frames:
            proj = self.project_box(box_id, frame.id)
            out[frame.id] = proj if proj["visible"] else {"visible": False,
                                                          "skipped": True}
        return out

    def export(self) -> dict:
        boxes = []
        for box_id, box in self.boxes.items():
            per_frame = {}
            for frame in self.bundle.frames:
                proj = self.project_box(box_id, frame.id)
                if proj["visible"]:
                    per_frame[frame.id] = proj["faces"]
            boxes.append({
                "id": box_id,
                "category": box.category,
                "origin": [float(x) for x in box.origin],
                "axes": [float(x) for x in box.axis_matrix.reshape(-1)],
                "extents": [float(x) for x in box.extents],
                "frames": per_frame,
            })
        return {"boxes": boxes}


def replay(bundle: Bundle, edit_log: list[dict]) -> AnnotationSession:
    """Rebuild a session from its edit log."""
    session = AnnotationSession(bundle)
    for entry in edit_log:
        op = entry["op"]
        if op == "set_vps":
            session.set_vanishing_points(entry["frame"], entry["vp_x"], entry["vp_y"])
        elif op == "origin":
            session.triangulate_origin(entry["frame_a"], entry["px_a"],
                                       entry["frame_b"], entry["px_b"])
        elif op == "create_box":
            session.create_box(entry["category"], extents=entry["extents"],
                               origin=entry["origin"])
        elif op == "move_face":
            session.move_face(entry["box"], entry["face"], entry["delta"])
        else:
            raise ValueError(f"unknown log op {op!r}")
    return session


def cuboid_from_export(entry: dict) -> Cuboid:
    M = np.asarray(entry["axes"], dtype=float).reshape(3, 3)
    axes = SceneAxes(x_dir=M[0], y_dir=M[1], gravity=M[2])
    return Cuboid(origin=np.asarray(entry["origin"], dtype=float), axes=axes,
                  extents=np.asarray(entry["extents"], dtype=float),
                  category=entry.get("category", ""))
