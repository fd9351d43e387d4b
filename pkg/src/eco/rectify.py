"""Frontalization of planar cuboid faces.

The warp is K R K^-1 built from the face normal and gravity, followed by an
isotropic scale chosen so a physical vertical slice of the face spans exactly
fy pixels, plus a canvas translation for raster output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import (
    BehindCameraError,
    DegenerateOrientationError,
    InvalidSpanError,
    OversizedWarpError,
)
from .geometry import CameraIntrinsics, Pose, project

CANVAS_CAP = 8192
MIN_NORMAL_GRAVITY_ANGLE = math.radians(5.0)


@dataclass(frozen=True)
class CuboidFace:
    """Planar face with corners ordered BL, BR, TR, TL in world coordinates.

    The (corners[0], corners[3]) edge is the vertical reference slice of
    physical height `height`.
    """

    corners: np.ndarray  # 4x3
    normal: np.ndarray  # unit, world frame
    offset: float  # plane: normal . X = offset
    height: float

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float).reshape(4, 3)
        normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("face normal must be unit norm")
        if np.abs(corners @ normal - self.offset).max() > 1e-6:
            raise ValueError("corners are not coplanar with the face plane")
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "normal", normal)

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)

    @property
    def vertical_edge(self) -> tuple[np.ndarray, np.ndarray]:
        return self.corners[0], self.corners[3]

    @classmethod
    def from_corners(cls, corners, height=None) -> "CuboidFace":
        corners = np.asarray(corners, dtype=float).reshape(4, 3)
        n = np.cross(corners[1] - corners[0], corners[3] - corners[0])
        n = n / np.linalg.norm(n)
        if height is None:
            height = float(np.linalg.norm(corners[3] - corners[0]))
        return cls(corners=corners, normal=n, offset=float(n @ corners[0]), height=height)


@dataclass(frozen=True)
class WarpSpec:
    H_O: np.ndarray  # 3x3 frontalization homography
    s: float  # scale factor fy / dv
    T: np.ndarray  # 3x3 canvas translation
    canvas_size: tuple[int, int]  # (w, h)
    dv: float  # pre-scale pixel span of the vertical reference edge

    def __post_init__(self):
        H = np.asarray(self.H_O, dtype=float).reshape(3, 3)
        if abs(np.linalg.det(H)) < 1e-12:
            raise ValueError("H_O is singular")
        object.__setattr__(self, "H_O", H)
        object.__setattr__(self, "T", np.asarray(self.T, dtype=float).reshape(3, 3))
        if self.s <= 0:
            raise ValueError("scale factor must be positive")

    @property
    def H_s(self) -> np.ndarray:
        return np.diag([self.s, self.s, 1.0])

    @property
    def W(self) -> np.ndarray:
        return self.T @ self.H_s @ self.H_O

    def to_json(self) -> dict:
        return {
            "H_O": [float(x) for x in self.H_O.reshape(-1)],
            "s": float(self.s),
            "T": [float(x) for x in self.T.reshape(-1)],
            "canvas_size": list(self.canvas_size),
            "dv": float(self.dv),
        }

    @classmethod
    def from_json(cls, data: dict) -> "WarpSpec":
        return cls(
            H_O=np.array(data["H_O"]).reshape(3, 3),
            s=data["s"],
            T=np.array(data["T"]).reshape(3, 3),
            canvas_size=(int(data["canvas_size"][0]), int(data["canvas_size"][1])),
            dv=data["dv"],
        )


def _unit(v):
    return v / np.linalg.norm(v)


def frontalization_rotation(n_O, g, object_dir) -> np.ndarray:
    """Rotation with rows r_x, r_y, r_z mapping the face normal to the new
    optical axis and gravity to image-down.

    r_z is +-n_O oriented toward the object; r_x = unit(g x r_z) and
    r_y = r_z x r_x orthonormalize the frame while keeping r_y closest to g.
    """
    n_O = _unit(np.asarray(n_O, dtype=float))
    g = _unit(np.asarray(g, dtype=float))
    object_dir = _unit(np.asarray(object_dir, dtype=float))
    sin_angle = np.linalg.norm(np.cross(n_O, g))
    if sin_angle < math.sin(MIN_NORMAL_GRAVITY_ANGLE):
        raise DegenerateOrientationError("face normal is near parallel to gravity")
    r_z = n_O if n_O @ object_dir > 0 else -n_O
    if abs(r_z @ object_dir) < 1e-12:
        raise DegenerateOrientationError("face normal perpendicular to the viewing direction")
    r_x = _unit(np.cross(g, r_z))
    r_y = np.cross(r_z, r_x)
    return np.stack([r_x, r_y, r_z])


def frontalization_homography(K: CameraIntrinsics, n_O, g, object_dir) -> np.ndarray:
    """K R K^-1 for camera-frame face normal n_O and camera-frame gravity g."""
    R = frontalization_rotation(n_O, g, object_dir)
    return K.K @ R @ K.K_inv


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a 3x3 homography to Nx2 points."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ph = np.hstack([pts, np.ones((len(pts), 1))]) @ H.T
    return ph[:, :2] / ph[:, 2:3]


def measure_dv(H_O: np.ndarray, face: CuboidFace, K: CameraIntrinsics, pose: Pose) -> float:
    """Pixel span of the face's vertical reference edge after applying H_O."""
    for corner in face.corners:
        depth = (pose.R @ (corner - pose.C))[2]
        if depth <= 0:
            raise BehindCameraError("face corner behind camera")
    bottom, top = face.vertical_edge
    pts = np.array([project(K, pose, bottom), project(K, pose, top)])
    warped = apply_homography(H_O, pts)
    return float(warped[:, 1].max() - warped[:, 1].min())


def scale_factor(fy: float, dv: float) -> float:
    if dv <= 0:
        raise InvalidSpanError(f"pixel span must be positive, got {dv}")
    return fy / dv


def compose_warp(H_O: np.ndarray, s: float, region: np.ndarray, dv: float) -> WarpSpec:
    """Full warp W = T H_s H_O with the canvas fit to the warped region.

    `region` is the face polygon already mapped through H_O; T moves the
    scaled bounding box to the canvas origin.
    """
    if s <= 0:
        raise InvalidSpanError("scale factor must be positive")
    region = np.asarray(region, dtype=float).reshape(-1, 2)
    scaled = region * s
    lo = scaled.min(axis=0)
    hi = scaled.max(axis=0)
    w = int(math.ceil(hi[0] - lo[0]))
    h = int(math.ceil(hi[1] - lo[1]))
    if w > CANVAS_CAP or h > CANVAS_CAP:
        raise OversizedWarpError(f"canvas {w}x{h} exceeds cap {CANVAS_CAP}")
    T = np.array([[1.0, 0.0, -lo[0]], [0.0, 1.0, -lo[1]], [0.0, 0.0, 1.0]])
    return WarpSpec(H_O=H_O, s=s, T=T, canvas_size=(max(w, 1), max(h, 1)), dv=dv)


def warp_image(image: np.ndarray, W: np.ndarray, canvas_size: tuple[int, int]) -> np.ndarray:
    """Inverse-mapped bilinear resampling; out-of-source pixels are black."""
    W = np.asarray(W, dtype=float)
    if abs(np.linalg.det(W)) < 1e-12:
        raise InvalidSpanError("warp matrix is singular")
    return cv2.warpPerspective(
        image, W, canvas_size, flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0,
    )


def build_face_warp(K: CameraIntrinsics, pose: Pose, face: CuboidFace, gravity_world) -> WarpSpec:
    """Spec for frontalizing one labeled face seen from one frame."""
    n_cam = pose.R @ face.normal
    g_cam = pose.R @ np.asarray(gravity_world, dtype=float)
    centroid_cam = pose.R @ (face.centroid - pose.C)
    H_O = frontalization_homography(K, n_cam, g_cam, _unit(centroid_cam))
    dv = measure_dv(H_O, face, K, pose)
    s = scale_factor(K.fy, dv)
    projected = np.array([project(K, pose, c) for c in face.corners])
    region = apply_homography(H_O, projected)
    return compose_warp(H_O, s, region, dv)


def warped_face_polygon(spec: WarpSpec, K: CameraIntrinsics, pose: Pose, face: CuboidFace) -> np.ndarray:
    projected = np.array([project(K, pose, c) for c in face.corners])
    return apply_homography(spec.W, projected)


def save_warpspec(spec: WarpSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=1, sort_keys=True)
