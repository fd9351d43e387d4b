"""Strip descriptors: a deterministic baseline extractor and the ECOF binary
feature format with an import path for externally computed deep features.

ECOF layout, little-endian:
  magic "ECOF" | u32 version=1 | u32 count | u32 dim | count x (u64 id, dim x f32)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, FormatError

DEFAULT_DIM = 2048
MAGIC = b"ECOF"
VERSION = 1

GRID = 8
HUE_BINS = 16
ORI_BINS = 16


@dataclass
class FeatureVector:
    values: np.ndarray
    strip_id: int
    domain: str = ""  # train-store | test-store
    category: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if not np.isfinite(v).all():
            raise ValueError("feature vector has non-finite entries")
        self.values = v


def _hue(rgb: np.ndarray) -> np.ndarray:
    """Hue in [0, 1) computed directly so the extractor has no codec deps."""
    rgb = rgb.astype(np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    diff = mx - mn
    hue = np.zeros_like(mx)
    mask = diff > 1e-12
    rm = mask & (mx == r)
    gm = mask & ~rm & (mx == g)
    bm = mask & ~rm & ~gm
    hue[rm] = ((g[rm] - b[rm]) / diff[rm]) % 6.0
    hue[gm] = (b[gm] - r[gm]) / diff[gm] + 2.0
    hue[bm] = (r[bm] - g[bm]) / diff[bm] + 4.0
    return hue / 6.0


def extract_baseline(strip: np.ndarray, dim: int = DEFAULT_DIM) -> np.ndarray:
    """8x8 grid of (16-bin hue + 16-bin gradient-orientation) histograms,
    L2-normalized per cell, flattened and padded/truncated to `dim`."""
    h, w = strip.shape[:2]
    gray = strip.astype(np.float64).mean(axis=-1)
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    ori = np.arctan2(gy, gx) % (2.0 * np.pi)
    hue = _hue(strip)

    ys = np.linspace(0, h, GRID + 1).astype(int)
    xs = np.linspace(0, w, GRID + 1).astype(int)
    cells = []
    for i in range(GRID):
        for j in range(GRID):
            sl = (slice(ys[i], ys[i + 1]), slice(xs[j], xs[j + 1]))
            hue_hist, _ = np.histogram(hue[sl], bins=HUE_BINS, range=(0.0, 1.0))
            ori_hist, _ = np.histogram(
                ori[sl], bins=ORI_BINS, range=(0.0, 2.0 * np.pi), weights=mag[sl]
            )
            cell = np.concatenate([hue_hist.astype(np.float64), ori_hist])
            norm = np.linalg.norm(cell)
            if norm > 1e-12:
                cell = cell / norm
            cells.append(cell)
    feat = np.concatenate(cells)
    if len(feat) < dim:
        feat = np.pad(feat, (0, dim - len(feat)))
    return feat[:dim].astype(np.float32)


def write_features(path, vectors: list[FeatureVector]) -> None:
    if not vectors:
        raise ValueError("nothing to write")
    dim = len(vectors[0].values)
    ids = set()
    for v in vectors:
        if len(v.values) != dim:
            raise DimensionMismatchError("inconsistent feature dimensions")
        if v.strip_id in ids:
            raise FormatError(f"duplicate strip id {v.strip_id}")
        ids.add(v.strip_id)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, len(vectors), dim))
        for v in vectors:
            fh.write(struct.pack("<Q", v.strip_id))
            fh.write(v.values.astype("<f4").tobytes())


def read_features(path) -> list[FeatureVector]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}")
    version, count, dim = struct.unpack_from("<III", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported ECOF version {version}")
    record = 8 + 4 * dim
    expected = 16 + count * record
    if len(data) != expected:
        raise DimensionMismatchError(
            f"file size {len(data)} != {expected} for {count} x {dim} records"
        )
    out = []
    seen = set()
    off = 16
    for _ in range(count):
        (strip_id,) = struct.unpack_from("<Q", data, off)
        if strip_id in seen:
            raise FormatError(f"duplicate strip id {strip_id}")
        seen.add(strip_id)
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=off + 8)
        out.append(FeatureVector(values=values.copy(), strip_id=strip_id))
        off += record
    return out


def import_features(path, manifest: dict | None = None) -> tuple[list[FeatureVector], list[int]]:
    """Load an ECOF file and join vectors to strip metadata.

    Returns (vectors, unmatched ids). With no manifest everything matches.
    """
    vectors = read_features(path)
    unmatched = []
    if manifest is not None:
        for v in vectors:
            meta = manifest.get(str(v.strip_id))
            if meta is None:
                unmatched.append(v.strip_id)
            else:
                v.category = meta.get("category")
                v.domain = meta.get("domain", "")
    return vectors, unmatched
