"""Pinhole camera algebra: projection, vanishing-point axis recovery,
gravity derivation, and two-view ray-midpoint triangulation.

All rotations are world->camera; camera centers are in world units.
Everything here is a pure function on immutable inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateAxesError,
    DegenerateBaselineError,
    FormatError,
)

DEPTH_EPS = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True)
class Pose:
    R: np.ndarray  # 3x3, world -> camera
    C: np.ndarray  # camera center, world frame

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float).reshape(3, 3)
        C = np.asarray(self.C, dtype=float).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-9:
            raise ValueError("R is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("det(R) != 1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "C", C)

    @property
    def viewing_axis(self) -> np.ndarray:
        """Optical axis direction in world coordinates."""
        return self.R.T @ np.array([0.0, 0.0, 1.0])


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise DegenerateAxesError("cannot normalize a near-zero vector")
    return v / n


@dataclass(frozen=True)
class SceneAxes:
    x_dir: np.ndarray
    y_dir: np.ndarray
    gravity: np.ndarray

    def __post_init__(self):
        for name in ("x_dir", "y_dir", "gravity"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if abs(np.linalg.norm(v) - 1.0) > 1e-9:
                raise ValueError(f"{name} is not unit norm")
            object.__setattr__(self, name, v)
        if abs(self.gravity @ self.x_dir) > 1e-6 or abs(self.gravity @ self.y_dir) > 1e-6:
            raise ValueError("gravity must be orthogonal to both horizontal axes")

    def as_matrix(self) -> np.ndarray:
        """Rows x_dir, y_dir, gravity."""
        return np.stack([self.x_dir, self.y_dir, self.gravity])


def project(K: CameraIntrinsics, pose: Pose, X) -> tuple[float, float]:
    """Project a world point; raises BehindCameraError for non-positive depth."""
    x_cam = pose.R @ (np.asarray(X, dtype=float) - pose.C)
    if x_cam[2] <= DEPTH_EPS:
        raise BehindCameraError(f"point depth {x_cam[2]:.3g} <= 0")
    u = K.fx * x_cam[0] / x_cam[2] + K.cx
    v = K.fy * x_cam[1] / x_cam[2] + K.cy
    return (u, v)


def project_at_infinity(K: CameraIntrinsics, pose: Pose, d) -> tuple[float, float]:
    """Vanishing point of world direction d (the image of the point at infinity)."""
    d_cam = pose.R @ np.asarray(d, dtype=float)
    if abs(d_cam[2]) < DEPTH_EPS:
        raise BehindCameraError("direction parallel to the image plane has no finite vp")
    p = K.K @ d_cam
    return (p[0] / p[2], p[1] / p[2])


def axis_from_vanishing_point(K: CameraIntrinsics, pose: Pose, vp) -> np.ndarray:
    """World direction whose vanishing point is vp: unit(R^T K^-1 [vp;1]).

    A vanishing point encodes a line, not a ray; the sign is fixed so the
    direction has non-negative dot product with the viewing axis ("ahead"),
    falling back to a lexicographic rule when the two are perpendicular.
    """
    vp = np.asarray(vp, dtype=float)
    d = pose.R.T @ (K.K_inv @ np.array([vp[0], vp[1], 1.0]))
    d = _unit(d)
    ahead = d @ pose.viewing_axis
    if ahead < -1e-12:
        d = -d
    elif abs(ahead) <= 1e-12:
        # perpendicular to the optical axis: pick a deterministic sign
        for c in d:
            if abs(c) > 1e-12:
                if c < 0:
                    d = -d
                break
    return d


def gravity_from_axes(x_dir, y_dir, reference: Pose) -> np.ndarray:
    """unit(x_dir x y_dir), oriented image-down in the reference camera.

    The sign rule: the camera-frame image of gravity must have a positive
    v-component (gravity points toward the bottom of the reference frame).
    """
    x_dir = np.asarray(x_dir, dtype=float)
    y_dir = np.asarray(y_dir, dtype=float)
    cross = np.cross(x_dir, y_dir)
    sin_angle = np.linalg.norm(cross) / (np.linalg.norm(x_dir) * np.linalg.norm(y_dir))
    if sin_angle < 1e-3:
        raise DegenerateAxesError("x/y directions are near parallel")
    g = _unit(cross)
    if (reference.R @ g)[1] < 0:
        g = -g
    return g


def orthonormalize_axes(x_dir, y_dir, reference: Pose) -> SceneAxes:
    """Exact orthonormal axes from two noisy horizontal directions.

    Gravity comes from the cross product (image-down sign); y_dir is rebuilt
    as gravity x x_dir with its sign following the input. Idempotent on
    already-orthonormal inputs.
    """
    dx = np.asarray(x_dir, dtype=float)
    dy = np.asarray(y_dir, dtype=float)
    g = gravity_from_axes(dx, dy, reference)
    x = _unit(dx - (dx @ g) * g)
    y = np.cross(g, x)
    if y @ dy < 0:
        y = -y
    return SceneAxes(x_dir=x, y_dir=y, gravity=g)


def scene_axes_from_vps(K: CameraIntrinsics, pose: Pose, vp_x, vp_y) -> SceneAxes:
    """Recover orthonormal scene axes from two clicked horizontal vanishing points."""
    dx = axis_from_vanishing_point(K, pose, vp_x)
    dy_raw = axis_from_vanishing_point(K, pose, vp_y)
    return orthonormalize_axes(dx, dy_raw, pose)


def triangulate(obs_a, pose_a: Pose, obs_b, pose_b: Pose, K: CameraIntrinsics) -> np.ndarray:
    """Midpoint of the shortest segment between the two back-projected rays."""
    Ca, Cb = pose_a.C, pose_b.C
    if np.linalg.norm(Ca - Cb) < 1e-9:
        raise DegenerateBaselineError("camera centers coincide")
    da = _unit(pose_a.R.T @ (K.K_inv @ np.array([obs_a[0], obs_a[1], 1.0])))
    db = _unit(pose_b.R.T @ (K.K_inv @ np.array([obs_b[0], obs_b[1], 1.0])))
    dot = da @ db
    denom = 1.0 - dot * dot
    if denom < 1e-12:
        raise DegenerateBaselineError("rays are near parallel")
    rhs = Cb - Ca
    ta = (da @ rhs - dot * (db @ rhs)) / denom
    tb = (dot * (da @ rhs) - db @ rhs) / denom
    pa = Ca + ta * da
    pb = Cb + tb * db
    return 0.5 * (pa + pb)


@dataclass(frozen=True)
class Frame:
    id: str
    image_path: str
    pose: Pose


@dataclass
class Bundle:
    intrinsics: CameraIntrinsics
    frames: list[Frame] = field(default_factory=list)

    def frame(self, frame_id: str) -> Frame:
        for f in self.frames:
            if f.id == frame_id:
                return f
        raise KeyError(frame_id)


def load_bundle(path) -> Bundle:
    """Read a reconstruction bundle JSON; rotations are validated on load."""
    with open(path) as fh:
        data = json.load(fh)
    try:
        intr = data["intrinsics"]
        K = CameraIntrinsics(
            fx=intr["fx"], fy=intr["fy"], cx=intr["cx"], cy=intr["cy"],
            width=intr["width"], height=intr["height"],
        )
        frames = []
        for fr in data["frames"]:
            R = np.array(fr["R"], dtype=float).reshape(3, 3)
            C = np.array(fr["C"], dtype=float)
            try:
                pose = Pose(R=R, C=C)
            except ValueError as e:
                raise FormatError(f"frame {fr.get('id')}: {e}") from e
            frames.append(Frame(id=str(fr["id"]), image_path=fr.get("image_path", ""), pose=pose))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed bundle: {e}") from e
    return Bundle(intrinsics=K, frames=frames)


def save_bundle(bundle: Bundle, path) -> None:
    data = {
        "intrinsics": {
            "fx": bundle.intrinsics.fx,
            "fy": bundle.intrinsics.fy,
            "cx": bundle.intrinsics.cx,
            "cy": bundle.intrinsics.cy,
            "width": bundle.intrinsics.width,
            "height": bundle.intrinsics.height,
        },
        "frames": [
            {
                "id": f.id,
                "image_path": f.image_path,
                "R": [float(x) for x in f.pose.R.reshape(-1)],
                "C": [float(x) for x in f.pose.C],
            }
            for f in bundle.frames
        ],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=1, sort_keys=True)
