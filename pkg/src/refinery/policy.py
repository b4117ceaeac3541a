"""Frame scoring and the query/self-label/discard selection policy.

Per frame the mean detection confidence is compared against a low and a high
threshold; frames below the low threshold are queried for annotation, frames
above the high one become self-supervision, everything between is dropped.
A frame containing any single box under the minimum per-box threshold is
queried regardless of its mean.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass

from .boxes import Detection

__all__ = ["SelectionThresholds", "DecisionKind", "FrameDecision", "frame_score", "select"]


@dataclass(frozen=True)
class SelectionThresholds:
    low: float = 0.3
    high: float = 0.4
    min_score: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.min_score <= self.low < self.high <= 1.0:
            raise ValueError(
                f"thresholds must satisfy 0 <= min_score <= low < high <= 1: {self}"
            )


class DecisionKind(enum.Enum):
    QUERY_HUMAN = "query_human"
    SELF_LABEL = "self_label"
    DISCARD = "discard"

    @property
    def rank(self) -> int:
        # confidence ordering used by the monotonicity property
        return {"query_human": 0, "discard": 1, "self_label": 2}[self.value]


@dataclass(frozen=True)
class FrameDecision:
    kind: DecisionKind
    frame_score: float
    reason: str


def frame_score(dets: Sequence[Detection]) -> float:
    """Arithmetic mean of detection scores; 0.0 for an empty frame."""
    if not dets:
        return 0.0
    return sum(d.score for d in dets) / len(dets)


def select(dets: Sequence[Detection], th: SelectionThresholds) -> FrameDecision:
    """Apply the selection rules in order; exactly one decision per frame."""
    score = frame_score(dets)
    if not dets:
        return FrameDecision(DecisionKind.QUERY_HUMAN, score, "no detections")
    min_det = min(d.score for d in dets)
    if min_det < th.min_score:
        return FrameDecision(
            DecisionKind.QUERY_HUMAN, score, f"box score {min_det:.3f} under minimum"
        )
    if score < th.low:
        return FrameDecision(DecisionKind.QUERY_HUMAN, score, f"mean {score:.3f} below low")
    if score > th.high:
        return FrameDecision(DecisionKind.SELF_LABEL, score, f"mean {score:.3f} above high")
    return FrameDecision(DecisionKind.DISCARD, score, f"mean {score:.3f} in dead band")
