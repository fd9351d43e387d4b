"""Vertical strip sampling from rectified face views plus canvas normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import StripTooWideError

CANVAS = 500
DEFAULT_STRIP_WIDTH = 100


@dataclass
class StripSource:
    store: str = ""
    frame: str = ""
    category: str = ""
    index: int = 0  # ordinal strip index, left to right


@dataclass
class Strip:
    pixels: np.ndarray  # 500x500x3 uint8 after normalization
    source: StripSource = field(default_factory=StripSource)
    world_width: float = 0.0
    distance: float = 0.0  # camera center to strip slab centroid, world units


def extract_strips(image: np.ndarray, rect: tuple[int, int, int, int],
                   strip_width: int = DEFAULT_STRIP_WIDTH) -> list[np.ndarray]:
    """Cut floor(rect_width / strip_width) uniform strips from an axis-aligned
    rectangle; the right-edge remainder is discarded."""
    if strip_width < 1:
        raise ValueError("strip width must be >= 1")
    x0, y0, x1, y1 = rect
    count = (x1 - x0) // strip_width
    return [
        image[y0:y1, x0 + i * strip_width: x0 + (i + 1) * strip_width].copy()
        for i in range(max(count, 0))
    ]


def normalize_strip(raw: np.ndarray) -> np.ndarray:
    """Scale to height 500 preserving aspect, centered on a 500x500 black canvas."""
    h, w = raw.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("empty strip")
    if h == CANVAS:
        resized = raw
        new_w = w
    else:
        new_w = max(int(round(w * CANVAS / h)), 1)
        resized = cv2.resize(raw, (new_w, CANVAS), interpolation=cv2.INTER_AREA)
    if new_w > CANVAS:
        raise StripTooWideError(f"strip {new_w}px wide after height normalization")
    canvas = np.zeros((CANVAS, CANVAS) + raw.shape[2:], dtype=raw.dtype)
    x_off = (CANVAS - new_w) // 2
    canvas[:, x_off:x_off + new_w] = resized
    return canvas


def preprocess(strip: np.ndarray, channel_means) -> np.ndarray:
    """RGB-mean subtraction; output is signed float."""
    means = np.asarray(channel_means, dtype=np.float64).reshape(1, 1, -1)
    return strip.astype(np.float64) - means


def corpus_channel_means(strips) -> np.ndarray:
    """Per-channel mean over a strip corpus (running sum, two-pass safe)."""
    total = np.zeros(3, dtype=np.float64)
    count = 0
    for s in strips:
        total += s.reshape(-1, 3).sum(axis=0)
        count += s.shape[0] * s.shape[1]
    if count == 0:
        raise ValueError("empty corpus")
    return total / count
