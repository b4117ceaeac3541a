"""Pluggable proposal sources: the stand-in for a region-proposal front end.

All learning happens downstream of features, so a source only has to yield
(box, feature) candidates for a frame. The replay source plays back the
proposals stored in the frame; the oracle-jitter source regenerates them
from ground truth and exists for tests.
"""

from __future__ import annotations

from typing import Callable, Protocol

import numpy as np

from .boxes import BoundingBox, clip_box
from .world import FrameRecord

__all__ = ["ProposalSource", "ReplaySource", "OracleJitterSource", "EmptyFrameError"]


class EmptyFrameError(RuntimeError):
    """A frame arrived with no stored proposals to replay."""


class ProposalSource(Protocol):
    implementation_id: str

    def propose(self, frame: FrameRecord) -> list[tuple[BoundingBox, np.ndarray]]:
        ...


class ReplaySource:
    """Plays back the proposals carried by the frame, verbatim."""

    implementation_id = "replay"

    def propose(self, frame: FrameRecord) -> list[tuple[BoundingBox, np.ndarray]]:
        if not frame.proposals:
            raise EmptyFrameError(f"frame {frame.frame_id} has no proposals")
        return list(frame.proposals)


class OracleJitterSource:
    """Regenerates proposals by jittering ground truth; test-only.

    Deterministic per (frame_id, seed). Features come from feature_fn when
    provided, otherwise zero vectors of feature_dim.
    """

    implementation_id = "oracle_jitter"

    def __init__(
        self,
        jitter_sigma: float = 0.0,
        per_gt: int = 5,
        n_background: int = 0,
        seed: int = 0,
        feature_dim: int = 8,
        feature_fn: Callable[[BoundingBox], np.ndarray] | None = None,
    ):
        self.jitter_sigma = jitter_sigma
        self.per_gt = per_gt
        self.n_background = n_background
        self.seed = seed
        self.feature_dim = feature_dim
        self.feature_fn = feature_fn

    def propose(self, frame: FrameRecord) -> list[tuple[BoundingBox, np.ndarray]]:
        rng = np.random.default_rng([self.seed, frame.frame_id])
        boxes: list[BoundingBox] = []
        for lb in frame.ground_truth:
            boxes.append(lb.box)  # exact box always present
            for _ in range(self.per_gt - 1):
                off = rng.normal(0.0, self.jitter_sigma, size=4) if self.jitter_sigma > 0 else np.zeros(4)
                cand = BoundingBox(
                    lb.box.x + off[0],
                    lb.box.y + off[1],
                    max(lb.box.w + off[2], 2.0),
                    max(lb.box.h + off[3], 2.0),
                )
                boxes.append(clip_box(cand, frame.frame_w, frame.frame_h))
        for _ in range(self.n_background):
            w = float(rng.uniform(4.0, frame.frame_w / 3.0))
            h = float(rng.uniform(4.0, frame.frame_h / 3.0))
            x = float(rng.uniform(0.0, frame.frame_w - w))
            y = float(rng.uniform(0.0, frame.frame_h - h))
            boxes.append(BoundingBox(x, y, w, h))
        return [
            (b, self.feature_fn(b) if self.feature_fn else np.zeros(self.feature_dim))
            for b in boxes
        ]
