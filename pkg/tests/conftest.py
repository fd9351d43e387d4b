import math

import numpy as np
import pytest

from eco.geometry import CameraIntrinsics, Pose


@pytest.fixture
def intr():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=640.0, cy=360.0,
                            width=1280, height=720)


def random_rotation(rng):
    """Uniform-ish random rotation from a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_pose(rng, spread=5.0):
    return Pose(R=random_rotation(rng), C=rng.uniform(-spread, spread, size=3))


def random_intrinsics(rng):
    w = int(rng.integers(400, 2000))
    h = int(rng.integers(300, 1500))
    return CameraIntrinsics(
        fx=float(rng.uniform(300, 2000)), fy=float(rng.uniform(300, 2000)),
        cx=float(rng.uniform(0.3, 0.7) * w), cy=float(rng.uniform(0.3, 0.7) * h),
        width=w, height=h)


def scalar_pinhole(intr, R, C, X):
    """Pure-scalar projection oracle, written independently of eco.geometry."""
    xc = []
    for i in range(3):
        xc.append(sum(float(R[i][j]) * (float(X[j]) - float(C[j])) for j in range(3)))
    return (intr.fx * xc[0] / xc[2] + intr.cx,
            intr.fy * xc[1] / xc[2] + intr.cy,
            xc[2])


def scalar_vanishing_point(intr, R, d):
    """Image of the point at infinity of direction d, scalar arithmetic."""
    dc = [sum(float(R[i][j]) * float(d[j]) for j in range(3)) for i in range(3)]
    return (intr.fx * dc[0] / dc[2] + intr.cx, intr.fy * dc[1] / dc[2] + intr.cy)


def angle_between(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = abs(float(a @ b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return math.acos(min(c, 1.0))
