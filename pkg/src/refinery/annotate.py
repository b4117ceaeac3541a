"""Annotation boundary: pending-query slot, scripted oracle, payload types.

Exploration pauses while an annotation request is pending, so the slot holds
at most one request at a time. The orchestrator blocks on the slot until a
response with the matching request id arrives or the timeout passes; HTTP
handlers and the scripted oracle both answer through the same interface.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .boxes import BoundingBox, Detection, LabeledBox, clip_box

__all__ = [
    "DrawableRect",
    "AnnotationRequest",
    "AnnotationResponse",
    "AnnotationQuery",
    "AnnotationTimeout",
    "PendingRequestError",
    "StaleResponseError",
    "InvalidResponseError",
    "PendingSlot",
    "Annotator",
    "OracleAnnotator",
    "SlotAnnotator",
    "oracle_annotate",
    "class_color",
]

_PALETTE = (
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
    "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
)


def class_color(class_id: int) -> str:
    return _PALETTE[class_id % len(_PALETTE)]


@dataclass(frozen=True)
class DrawableRect:
    """Vector stand-in for image content: one colored rectangle per object."""

    box: BoundingBox
    color: str
    label: str


@dataclass(frozen=True)
class AnnotationRequest:
    request_id: int
    frame_id: int
    frame_w: int
    frame_h: int
    drawables: list[DrawableRect]
    predicted: list[Detection]
    class_catalog: list[tuple[int, str]]

    def to_payload(self) -> dict:
        return {
            "request_id": self.request_id,
            "frame_id": self.frame_id,
            "frame_w": self.frame_w,
            "frame_h": self.frame_h,
            "drawables": [
                {
                    "box": {"x": d.box.x, "y": d.box.y, "w": d.box.w, "h": d.box.h},
                    "color": d.color,
                    "label": d.label,
                }
                for d in self.drawables
            ],
            "predicted": [
                {
                    "box": {"x": p.box.x, "y": p.box.y, "w": p.box.w, "h": p.box.h},
                    "class_id": p.class_id,
                    "score": p.score,
                }
                for p in self.predicted
            ],
            "class_catalog": [{"class_id": c, "name": n} for c, n in self.class_catalog],
        }


@dataclass(frozen=True)
class AnnotationResponse:
    request_id: int
    boxes: list[LabeledBox]
    accepted_predictions: list[bool] = field(default_factory=list)

    @staticmethod
    def from_payload(doc: dict) -> "AnnotationResponse":
        boxes = [
            LabeledBox(
                BoundingBox(b["box"]["x"], b["box"]["y"], b["box"]["w"], b["box"]["h"]),
                int(b["class_id"]),
            )
            for b in doc.get("boxes", [])
        ]
        return AnnotationResponse(
            request_id=int(doc["request_id"]),
            boxes=boxes,
            accepted_predictions=[bool(v) for v in doc.get("accepted_predictions", [])],
        )


@dataclass(frozen=True)
class AnnotationQuery:
    """Internal request wrapper; ground truth rides along for the oracle only."""

    request: AnnotationRequest
    ground_truth: list[LabeledBox]


class AnnotationTimeout(RuntimeError):
    """No response arrived in time; the caller discards the frame."""


class PendingRequestError(RuntimeError):
    """A second query was posted while one is already pending."""


class StaleResponseError(RuntimeError):
    """A response named a request id that is not the pending one."""


class InvalidResponseError(ValueError):
    """A response carried malformed or out-of-bounds boxes."""


class PendingSlot:
    """Thread-safe rendezvous holding at most one pending annotation request."""

    def __init__(self):
        self._cond = threading.Condition()
        self._pending: AnnotationRequest | None = None
        self._response: AnnotationResponse | None = None

    def post_query(self, request: AnnotationRequest):
        with self._cond:
            if self._pending is not None:
                raise PendingRequestError(
                    f"request {self._pending.request_id} is already pending"
                )
            self._pending = request
            self._response = None
            self._cond.notify_all()

    def pending(self) -> AnnotationRequest | None:
        with self._cond:
            return self._pending

    def submit(self, response: AnnotationResponse):
        with self._cond:
            if self._pending is None or response.request_id != self._pending.request_id:
                raise StaleResponseError(
                    f"response for request {response.request_id} does not match pending"
                )
            for lb in response.boxes:
                b = lb.box
                if b.x < 0 or b.y < 0 or b.x2 > self._pending.frame_w or b.y2 > self._pending.frame_h:
                    raise InvalidResponseError(f"box outside frame bounds: {b}")
            self._response = response
            self._pending = None
            self._cond.notify_all()

    def await_response(self, timeout: float) -> AnnotationResponse:
        with self._cond:
            ok = self._cond.wait_for(lambda: self._response is not None, timeout=timeout)
            if not ok:
                self._pending = None  # drop the query so the loop can move on
                raise AnnotationTimeout(f"no annotation within {timeout} s")
            response = self._response
            self._response = None
            return response


class Annotator(Protocol):
    timeout: float

    def annotate(self, query: AnnotationQuery) -> AnnotationResponse:
        ...


def oracle_annotate(
    request_id: int,
    ground_truth: list[LabeledBox],
    noise_sigma: float,
    rng: np.random.Generator,
    frame_w: int,
    frame_h: int,
) -> AnnotationResponse:
    """Ground-truth boxes with optional Gaussian corner noise."""
    boxes: list[LabeledBox] = []
    for lb in ground_truth:
        b = lb.box
        if noise_sigma > 0:
            n = rng.normal(0.0, noise_sigma, size=4)
            x1, y1 = b.x + n[0], b.y + n[1]
            x2, y2 = b.x2 + n[2], b.y2 + n[3]
            if x2 - x1 < 1.0:
                x2 = x1 + 1.0
            if y2 - y1 < 1.0:
                y2 = y1 + 1.0
            b = clip_box(BoundingBox(x1, y1, x2 - x1, y2 - y1), frame_w, frame_h)
        boxes.append(LabeledBox(b, lb.class_id))
    return AnnotationResponse(request_id=request_id, boxes=boxes)


class OracleAnnotator:
    """Scripted teacher used by unattended runs and benchmarks."""

    def __init__(self, noise_sigma: float = 0.0, seed: int = 0, timeout: float = 5.0):
        self.noise_sigma = noise_sigma
        self.timeout = timeout
        self._rng = np.random.default_rng([seed, 3])

    def annotate(self, query: AnnotationQuery) -> AnnotationResponse:
        req = query.request
        return oracle_annotate(
            req.request_id,
            query.ground_truth,
            self.noise_sigma,
            self._rng,
            req.frame_w,
            req.frame_h,
        )


class SlotAnnotator:
    """Human annotator reached through the pending slot of the HTTP service."""

    def __init__(self, slot: PendingSlot, timeout: float = 600.0):
        self.slot = slot
        self.timeout = timeout

    def annotate(self, query: AnnotationQuery) -> AnnotationResponse:
        self.slot.post_query(query.request)
        return self.slot.await_response(self.timeout)
