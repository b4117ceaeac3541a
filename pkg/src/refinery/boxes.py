"""Axis-aligned box arithmetic shared by every other module.

Boxes are stored as (x_min, y_min, width, height) with real-valued pixel
coordinates; every file format in this package uses the same convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BoundingBox",
    "LabeledBox",
    "Detection",
    "BoxDelta",
    "iou",
    "pairwise_iou",
    "nms",
    "encode_deltas",
    "apply_deltas",
    "clip_box",
    "boxes_to_array",
]


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise ValueError(f"non-finite box coordinate: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size: {self}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class LabeledBox:
    box: BoundingBox
    class_id: int

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative: {self.class_id}")


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    class_id: int
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1]: {self.score}")


@dataclass(frozen=True)
class BoxDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def __post_init__(self):
        for v in (self.dx, self.dy, self.dw, self.dh):
            if not math.isfinite(v):
                raise ValueError(f"non-finite delta: {self}")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes; 0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def boxes_to_array(boxes) -> np.ndarray:
    """Stack BoundingBox values into an (n, 4) float array of (x, y, w, h)."""
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([[b.x, b.y, b.w, b.h] for b in boxes], dtype=np.float64)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU matrix between (n, 4) and (m, 4) arrays of (x, y, w, h) boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    ix = np.minimum(ax2[:, None], bx2[None, :]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(ay2[:, None], by2[None, :]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy score-descending suppression, applied per class independently.

    Survivors come back sorted by descending score (stable for ties).
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1): {iou_thresh}")
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    arr = boxes_to_array([d.box for d in dets])
    kept: list[int] = []
    for c in {d.class_id for d in dets}:
        idx = np.array([i for i in order if dets[i].class_id == c])
        boxes = arr[idx]
        alive = np.ones(len(idx), dtype=bool)
        for k in range(len(idx)):
            if not alive[k]:
                continue
            kept.append(int(idx[k]))
            rest = alive.copy()
            rest[: k + 1] = False
            if rest.any():
                overlaps = pairwise_iou(boxes[k : k + 1], boxes[rest])[0]
                doomed = np.nonzero(rest)[0][overlaps > iou_thresh]
                alive[doomed] = False
    kept.sort(key=lambda i: (-dets[i].score, i))
    return [dets[i] for i in kept]


def encode_deltas(proposal: BoundingBox, target: BoundingBox) -> BoxDelta:
    """Center/log-size offsets that map `proposal` onto `target`."""
    pcx, pcy = proposal.center
    tcx, tcy = target.center
    return BoxDelta(
        dx=(tcx - pcx) / proposal.w,
        dy=(tcy - pcy) / proposal.h,
        dw=math.log(target.w / proposal.w),
        dh=math.log(target.h / proposal.h),
    )


def apply_deltas(proposal: BoundingBox, d: BoxDelta) -> BoundingBox:
    """Inverse of encode_deltas; output size clamped to stay positive."""
    pcx, pcy = proposal.center
    cx = pcx + d.dx * proposal.w
    cy = pcy + d.dy * proposal.h
    w = max(proposal.w * math.exp(d.dw), 1e-6)
    h = max(proposal.h * math.exp(d.dh), 1e-6)
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


def clip_box(box: BoundingBox, frame_w: float, frame_h: float) -> BoundingBox:
    """Intersect a box with the frame extent.

    A box entirely outside the frame degenerates to a 1x1 box at the nearest
    frame corner so callers never see an empty box.
    """
    if frame_w <= 0 or frame_h <= 0:
        raise ValueError("frame extent must be positive")
    x1 = max(box.x, 0.0)
    y1 = max(box.y, 0.0)
    x2 = min(box.x2, frame_w)
    y2 = min(box.y2, frame_h)
    if x2 - x1 <= 0 or y2 - y1 <= 0:
        cx = min(max(box.x, 0.0), frame_w - 1.0)
        cy = min(max(box.y, 0.0), frame_h - 1.0)
        return BoundingBox(cx, cy, 1.0, 1.0)
    return BoundingBox(x1, y1, x2 - x1, y2 - y1)
