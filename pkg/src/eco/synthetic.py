"""Ground-truth substrate for the geometric tests: deterministic textured
Manhattan box scenes, pinhole rendering, and bundle/label emission.

Ground-truth quantities are computed with `scalar_project`, a pure-Python
pinhole evaluator kept deliberately separate from the numpy projection path
it is used to check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .geometry import Bundle, CameraIntrinsics, Frame, Pose, save_bundle

UP = np.array([0.0, 0.0, 1.0])
GRAVITY = np.array([0.0, 0.0, -1.0])

CATEGORIES = ["bread", "cereal", "cheese", "dairy", "frozen-food", "meat"]


def scalar_project(intr: CameraIntrinsics, R, C, X):
    """Independent scalar pinhole evaluation; returns (u, v, depth).

    R and C may be nested lists or arrays; arithmetic is plain Python floats.
    """
    xc = [0.0, 0.0, 0.0]
    for i in range(3):
        acc = 0.0
        for j in range(3):
            acc += float(R[i][j]) * (float(X[j]) - float(C[j]))
        xc[i] = acc
    z = xc[2]
    u = intr.fx * xc[0] / z + intr.cx
    v = intr.fy * xc[1] / z + intr.cy
    return u, v, z


def look_at(position, target) -> Pose:
    """Camera at `position` looking at `target`, image-down aligned with gravity."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, UP)
    n = np.linalg.norm(right)
    if n < 1e-9:
        raise ValueError("camera looking straight along gravity")
    right = right / n
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return Pose(R=R, C=position)


@dataclass
class SceneBox:
    origin: np.ndarray
    extents: np.ndarray  # [x0, x1, y0, y1, z0, z1] along (x_dir, y_dir, gravity)
    category: str

    def axis_matrix(self):
        return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])


FACES = ("+x", "-x", "+y", "-y", "+z", "-z")
_AXIS = {"x": 0, "y": 1, "z": 2}


def face_quad(box: SceneBox, face: str) -> np.ndarray:
    """World corners BL, BR, TR, TL with the BL->TL edge opposite gravity."""
    M = box.axis_matrix()
    axis = _AXIS[face[1]]
    sign = 1 if face[0] == "+" else 0
    e = box.extents
    fixed = e[2 * axis + sign]
    others = [a for a in range(3) if a != axis]

    def corner(vals):
        offs = [0.0, 0.0, 0.0]
        offs[axis] = fixed
        for a, v in zip(others, vals):
            offs[a] = v
        return box.origin + offs[0] * M[0] + offs[1] * M[1] + offs[2] * M[2]

    lo = [e[2 * a] for a in others]
    hi = [e[2 * a + 1] for a in others]
    if axis == 2:
        # horizontal face (top or bottom): no gravity edge, pick a fixed walk
        quad = [corner([lo[0], lo[1]]), corner([hi[0], lo[1]]),
                corner([hi[0], hi[1]]), corner([lo[0], hi[1]])]
    else:
        # vertical face: axis `others[1]` is the gravity axis (gravity points
        # down, so extent max is the bottom)
        quad = [corner([lo[0], hi[1]]), corner([hi[0], hi[1]]),
                corner([hi[0], lo[1]]), corner([lo[0], lo[1]])]
    return np.array(quad)


def face_normal(box: SceneBox, face: str) -> np.ndarray:
    M = box.axis_matrix()
    sign = 1.0 if face[0] == "+" else -1.0
    return sign * M[_AXIS[face[1]]]


def texture_rgb(category: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Procedural texture on face coordinates in [0,1]^2, sampled per pixel.

    Category-keyed base color, a smooth checker-like shading, and a
    category-dependent stripe frequency so classes are separable for the
    feature tests. The pattern is smooth on purpose: resampling error then
    measures the warp, not texture-edge aliasing.
    """
    idx = CATEGORIES.index(category) if category in CATEGORIES else hash(category) % 6
    hue = idx / 6.0
    base = np.array(_hsv_to_rgb(hue, 0.7, 0.9)) * 255.0
    alt = np.array(_hsv_to_rgb((hue + 0.5) % 1.0, 0.5, 0.5)) * 255.0
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    checker = 0.5 * (1.0 + np.sin(2.0 * np.pi * 4 * a) * np.sin(2.0 * np.pi * 4 * b))
    stripes = 0.5 * (1.0 + np.sin(2.0 * np.pi * (3 + idx) * a))
    mix = 0.6 * checker + 0.4 * stripes
    out = base[None, :] * (1.0 - mix[..., None]) + alt[None, :] * mix[..., None]
    return out.astype(np.uint8)


def _hsv_to_rgb(h, s, v):
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    return [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]


@dataclass
class SyntheticScene:
    intrinsics: CameraIntrinsics
    poses: list[Pose]
    boxes: list[SceneBox]
    preset: str
    seed: int
    x_dir: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    y_dir: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def frame_id(self, i: int) -> str:
        return f"frame{i:04d}"


DEFAULT_INTRINSICS = CameraIntrinsics(fx=600.0, fy=600.0, cx=320.0, cy=240.0,
                                      width=640, height=480)


def generate(preset: str, seed: int, n_frames: int | None = None,
             intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    if preset == "single-face":
        box = SceneBox(origin=np.array([0.0, 0.0, 1.0]),
                       extents=np.array([-1.5, 1.5, -0.3, 0.3, -1.0, 1.0]),
                       category=CATEGORIES[int(rng.integers(0, len(CATEGORIES)))])
        # camera on the -y side at a seeded azimuth within +-60 deg of the
        # face normal, looking at the front face center
        angle = rng.uniform(-math.radians(60.0), math.radians(60.0))
        dist = rng.uniform(3.0, 4.5)
        cam = box.origin + np.array([math.sin(angle) * dist,
                                     -math.cos(angle) * dist, 0.0])
        poses = [look_at(cam, box.origin)]
        boxes = [box]
    elif preset == "aisle":
        boxes = []
        for i in range(4):
            for side, y in ((1.0, 1.8), (-1.0, -1.8)):
                cat = CATEGORIES[(2 * i + (0 if side > 0 else 1)) % len(CATEGORIES)]
                boxes.append(SceneBox(
                    origin=np.array([2.5 * i, y + side * 0.3, 1.0]),
                    extents=np.array([-1.1, 1.1, -0.3, 0.3, -0.9, 0.9]),
                    category=cat))
        count = n_frames or 10
        poses = []
        for t in range(count):
            x = -2.0 + 10.0 * t / max(count - 1, 1)
            poses.append(look_at(np.array([x, 0.0, 1.0]),
                                 np.array([x + 2.0, 0.6, 1.0])))
    elif preset == "orbit":
        box = SceneBox(origin=np.array([0.0, 0.0, 1.0]),
                       extents=np.array([-1.0, 1.0, -0.6, 0.6, -0.8, 0.8]),
                       category=CATEGORIES[int(rng.integers(0, len(CATEGORIES)))])
        boxes = [box]
        count = n_frames or 200
        radius = 4.0
        poses = []
        for t in range(count):
            # partial arc on the -y side so the front face stays visible
            theta = -math.pi / 2 + math.radians(100.0) * (t / max(count - 1, 1) - 0.5)
            cam = box.origin + radius * np.array([math.cos(theta), math.sin(theta), 0.0])
            poses.append(look_at(cam, box.origin))
    else:
        raise ValueError(f"unknown preset {preset!r}")
    return SyntheticScene(intrinsics=intrinsics, poses=poses, boxes=boxes,
                          preset=preset, seed=seed)


def render(scene: SyntheticScene, frame_index: int) -> np.ndarray:
    """Painter's render with a z-buffer; no anti-aliasing."""
    intr = scene.intrinsics
    pose = scene.poses[frame_index]
    return render_view(scene.boxes, intr.K, pose.R, pose.C, intr.width, intr.height)


def render_view(boxes, K, R, C, width, height) -> np.ndarray:
    """Render from a raw (K, R, C) view, unconstrained by image bounds."""
    pose = Pose(R=np.asarray(R, dtype=float), C=np.asarray(C, dtype=float))
    H, W = height, width
    img = np.zeros((H, W, 3), dtype=np.uint8)
    zbuf = np.full((H, W), np.inf)
    # integer sample locations, matching the inverse-mapping convention of
    # the image warper so warped and direct renders are comparable
    us, vs = np.meshgrid(np.arange(W, dtype=float), np.arange(H, dtype=float))
    pix = np.stack([us, vs, np.ones_like(us)], axis=-1)  # H x W x 3
    K = np.asarray(K, dtype=float)
    for box in boxes:
        for face in FACES:
            quad = face_quad(box, face)
            center = quad.mean(axis=0)
            if face_normal(box, face) @ (center - pose.C) >= 0:
                continue  # back-facing
            e_u = quad[1] - quad[0]
            e_v = quad[3] - quad[0]
            M = np.column_stack([K @ pose.R @ e_u, K @ pose.R @ e_v,
                                 K @ pose.R @ (quad[0] - pose.C)])
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            Minv = np.linalg.inv(M)
            abw = pix @ Minv.T
            w = abw[..., 2]
            valid = np.abs(w) > 1e-12
            a = np.where(valid, abw[..., 0] / np.where(valid, w, 1.0), -1.0)
            b = np.where(valid, abw[..., 1] / np.where(valid, w, 1.0), -1.0)
            inside = valid & (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
            if not inside.any():
                continue
            # depth of the surface point at each pixel
            pts_depth = (pose.R[2] @ (quad[0] - pose.C)
                         + a * (pose.R[2] @ e_u) + b * (pose.R[2] @ e_v))
            inside &= pts_depth > 1e-6
            write = inside & (pts_depth < zbuf)
            if not write.any():
                continue
            tex = texture_rgb(box.category, np.clip(a[write], 0, 1),
                              np.clip(b[write], 0, 1))
            img[write] = tex
            zbuf[write] = pts_depth[write]
    return img


def ground_truth(scene: SyntheticScene) -> dict:
    """Per-frame oracle data computed via the scalar projector."""
    intr = scene.intrinsics
    frames = []
    for i, pose in enumerate(scene.poses):
        R = [[float(x) for x in row] for row in pose.R]
        C = [float(x) for x in pose.C]
        g_cam = pose.R @ scene.gravity
        entry = {
            "id": scene.frame_id(i),
            "gravity_cam": [float(x) for x in g_cam],
            "boxes": [],
        }
        for bi, box in enumerate(scene.boxes):
            faces = {}
            for face in FACES:
                quad = face_quad(box, face)
                n_cam = pose.R @ face_normal(box, face)
                corners = []
                depths = []
                for X in quad:
                    u, v, z = scalar_project(intr, R, C, X)
                    corners.append([u, v])
                    depths.append(z)
                faces[face] = {
                    "corners_3d": [[float(x) for x in X] for X in quad],
                    "corners_px": corners,
                    "depths": depths,
                    "normal_cam": [float(x) for x in n_cam],
                    "visible": bool(
                        all(d > 0 for d in depths)
                        and face_normal(box, face) @ (quad.mean(axis=0) - pose.C) < 0
                    ),
                }
            entry["boxes"].append({"index": bi, "category": box.category,
                                   "faces": faces})
        frames.append(entry)
    return {
        "x_dir": [float(x) for x in scene.x_dir],
        "y_dir": [float(x) for x in scene.y_dir],
        "gravity": [float(x) for x in scene.gravity],
        "frames": frames,
    }


def labels_export(scene: SyntheticScene, store: str = "synth") -> dict:
    boxes = []
    for i, box in enumerate(scene.boxes):
        boxes.append({
            "id": i,
            "category": box.category,
            "origin": [float(x) for x in box.origin],
            "axes": [float(x) for x in box.axis_matrix().reshape(-1)],
            "extents": [float(x) for x in box.extents],
        })
    return {"store": store, "boxes": boxes}


def emit(scene: SyntheticScene, outdir) -> Bundle:
    """Write frames, bundle, labels, and ground truth under outdir."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, pose in enumerate(scene.poses):
        img = render(scene, i)
        name = f"{scene.frame_id(i)}.png"
        cv2.imwrite(str(outdir / name), img[:, :, ::-1])  # stored BGR
        frames.append(Frame(id=scene.frame_id(i), image_path=name, pose=pose))
    bundle = Bundle(intrinsics=scene.intrinsics, frames=frames)
    save_bundle(bundle, outdir / "bundle.json")
    with open(outdir / "labels.json", "w") as fh:
        json.dump(labels_export(scene), fh, indent=1, sort_keys=True)
    with open(outdir / "gt.json", "w") as fh:
        json.dump(ground_truth(scene), fh, indent=1, sort_keys=True)
    return bundle
