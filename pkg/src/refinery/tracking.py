"""Propagates human-provided labels across frames and gates their quality.

The baseline tracker is appearance-free: each track predicts its box under a
constant-velocity model and snaps to the best-overlapping region proposal.
A track that finds no proposal for too many consecutive frames turns
unhealthy; the quality gate also fails when two tracked objects overlap too
much, and either condition sends the frame back to the human.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .boxes import BoundingBox, LabeledBox, iou

__all__ = ["TrackerConfig", "TrackState", "TrackSet", "init_tracks", "quality_gate"]

_VELOCITY_SMOOTHING = 0.5


@dataclass(frozen=True)
class TrackerConfig:
    match_iou: float = 0.3
    overlap_gate: float = 0.5
    max_coast: int = 5

    def __post_init__(self):
        if not 0.0 < self.match_iou < 1.0 or not 0.0 < self.overlap_gate < 1.0:
            raise ValueError("match_iou and overlap_gate must lie in (0, 1)")
        if self.max_coast < 1:
            raise ValueError("max_coast must be >= 1")


@dataclass(frozen=True)
class TrackState:
    class_id: int
    box: BoundingBox
    velocity: tuple[float, float] = (0.0, 0.0)
    age: int = 0
    coast_count: int = 0
    healthy: bool = True


class TrackSet:
    """One track per annotated object; owned by a single control loop."""

    def __init__(self, tracks: list[TrackState], cfg: TrackerConfig):
        self.tracks = tracks
        self.cfg = cfg

    def labels(self) -> list[LabeledBox]:
        return [LabeledBox(t.box, t.class_id) for t in self.tracks]

    @property
    def any_unhealthy(self) -> bool:
        return any(not t.healthy for t in self.tracks)

    def propagate(self, frame) -> list[LabeledBox]:
        """Advance every track one frame against the frame's proposals.

        Prediction shifts the box by the velocity estimate; among proposals
        overlapping the prediction at match_iou or better the track snaps to
        the best one and smooths its velocity from the observed center
        displacement. With no match it coasts on the prediction.
        """
        if not self.tracks:
            raise ValueError("cannot propagate an empty track set")
        proposal_boxes = [b for b, _ in frame.proposals]
        updated: list[TrackState] = []
        for t in self.tracks:
            pred = BoundingBox(
                t.box.x + t.velocity[0], t.box.y + t.velocity[1], t.box.w, t.box.h
            )
            best_box, best_iou = None, 0.0
            for pb in proposal_boxes:
                v = iou(pred, pb)
                if v > best_iou:
                    best_box, best_iou = pb, v
            if best_box is not None and best_iou >= self.cfg.match_iou:
                old_cx, old_cy = t.box.center
                new_cx, new_cy = best_box.center
                vel = (
                    _VELOCITY_SMOOTHING * t.velocity[0]
                    + (1 - _VELOCITY_SMOOTHING) * (new_cx - old_cx),
                    _VELOCITY_SMOOTHING * t.velocity[1]
                    + (1 - _VELOCITY_SMOOTHING) * (new_cy - old_cy),
                )
                updated.append(
                    replace(t, box=best_box, velocity=vel, age=t.age + 1, coast_count=0)
                )
            else:
                coast = t.coast_count + 1
                updated.append(
                    replace(
                        t,
                        box=pred,
                        age=t.age + 1,
                        coast_count=coast,
                        healthy=t.healthy and coast < self.cfg.max_coast,
                    )
                )
        self.tracks = updated
        return self.labels()


def init_tracks(annotations: list[LabeledBox], cfg: TrackerConfig = TrackerConfig()) -> TrackSet:
    """Fresh track per annotation, zero velocity, healthy; prior state is gone."""
    if not annotations:
        raise ValueError("cannot initialize tracks from zero annotations")
    return TrackSet([TrackState(class_id=lb.class_id, box=lb.box) for lb in annotations], cfg)


def quality_gate(
    labels: list[LabeledBox],
    cfg: TrackerConfig = TrackerConfig(),
    any_unhealthy: bool = False,
) -> str:
    """'low' when two tracked objects overlap past the gate or a track is lost."""
    if any_unhealthy:
        return "low"
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            if iou(a.box, b.box) > cfg.overlap_gate:
                return "low"
    return "ok"
