"""Automatic supervision from depth: segment the nearest blob, box it.

A frame's depth map is thresholded at the minimum valid depth plus a slack
band, the largest 4-connected component of the mask is selected, and its
tight bounding box becomes a free training label (plus a gaze target point
for the attention controller stand-in).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from .boxes import BoundingBox

__all__ = ["DepthMap", "BlobConfig", "NoBlobError", "nearest_blob_box", "gaze_target"]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class DepthMap:
    """Row-major depth values in meters; 0.0 marks invalid pixels."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.width * self.height:
            raise ValueError("values length must equal width*height")
        if np.any(v < 0):
            raise ValueError("depth values must be non-negative")
        object.__setattr__(self, "values", v.reshape(self.height, self.width))

    def grid(self) -> np.ndarray:
        return self.values


@dataclass(frozen=True)
class BlobConfig:
    depth_delta: float = 0.15
    min_area: int = 9

    def __post_init__(self):
        if self.depth_delta <= 0:
            raise ValueError("depth_delta must be positive")
        if self.min_area < 1:
            raise ValueError("min_area must be >= 1")


class NoBlobError(RuntimeError):
    """No connected component of sufficient area near the minimum depth."""


def nearest_blob_box(depth: DepthMap, cfg: BlobConfig = BlobConfig()) -> BoundingBox:
    """Tight bounding box of the largest near-depth connected component.

    Pixels within depth_delta of the minimum valid depth form the mask;
    components are 4-connected; ties between equally large components break
    toward the component labeled first (row-major scan order).
    """
    grid = depth.grid()
    valid = grid > 0
    if int(valid.sum()) < cfg.min_area:
        raise NoBlobError("not enough valid depth pixels")
    d0 = float(grid[valid].min())
    mask = valid & (grid <= d0 + cfg.depth_delta)
    labels, count = scipy.ndimage.label(mask, structure=_FOUR_CONNECTED)
    if count == 0:
        raise NoBlobError("empty near-depth mask")
    areas = np.bincount(labels.ravel())[1:]
    best = int(np.argmax(areas)) + 1
    if areas[best - 1] < cfg.min_area:
        raise NoBlobError(f"largest blob area {areas[best - 1]} < min_area {cfg.min_area}")
    rows, cols = np.nonzero(labels == best)
    x0, x1 = int(cols.min()), int(cols.max())
    y0, y1 = int(rows.min()), int(rows.max())
    return BoundingBox(x=float(x0), y=float(y0), w=float(x1 - x0 + 1), h=float(y1 - y0 + 1))


def gaze_target(box: BoundingBox) -> tuple[float, float]:
    """Point to fixate: the box center."""
    return box.center
