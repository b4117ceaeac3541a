"""Application control loop: command state machine and the two phases.

The engine is a single logical loop owning the dataset store and the current
models. A supervised phase turns depth maps into free labels and trains the
initial detector; a refinement phase walks an exploration sequence deciding
per frame between self-labeling, tracker-propagated annotation and a human
query, then retrains once at the end. Every step lands in an append-only
JSON-lines event log from which the run statistics can be rebuilt.
"""

from __future__ import annotations

import enum
import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .annotate import (
    AnnotationQuery,
    AnnotationRequest,
    AnnotationTimeout,
    Annotator,
    DrawableRect,
    class_color,
)
from .boxes import Detection, LabeledBox, clip_box
from .depth import BlobConfig, NoBlobError, nearest_blob_box
from .evaluate import EvalConfig, evaluate
from .inference import InferenceConfig, detect, detect_frames
from .kernels import KernelConfig
from .policy import DecisionKind, SelectionThresholds, select
from .tracking import TrackerConfig, TrackSet, init_tracks, quality_gate
from .training import DatasetStore, MiningConfig, ModelBundle, retrain_from_store
from .world import ExplorationSequence, load_sequence

__all__ = [
    "AppState",
    "EngineConfig",
    "RefinementStats",
    "PhaseError",
    "CommandError",
    "EventLog",
    "Engine",
    "stats_from_log",
]


class AppState(enum.Enum):
    INFERENCE = "inference"
    SUPERVISED_TRAIN = "supervised_train"
    WEAKLY_SUPERVISED_TRAIN = "weakly_supervised_train"


class PhaseError(RuntimeError):
    pass


class CommandError(ValueError):
    pass


@dataclass
class RefinementStats:
    total_al_queries_images: int = 0
    total_al_queries_boxes: int = 0
    human_images: int = 0
    human_boxes: int = 0
    tracker_images: int = 0
    ssl_images: int = 0
    discarded_images: int = 0
    timeout_images: int = 0
    frames_processed: int = 0
    pseudo_label_map: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)

    def check_invariants(self):
        assert self.human_images <= self.total_al_queries_images
        assert (
            self.ssl_images + self.discarded_images + self.total_al_queries_images
            == self.frames_processed
        )


@dataclass(frozen=True)
class EngineConfig:
    thresholds: SelectionThresholds = SelectionThresholds()
    tracker: TrackerConfig = TrackerConfig()
    inference: InferenceConfig = InferenceConfig()
    kernel: KernelConfig = KernelConfig()
    mining: MiningConfig = MiningConfig()
    blob: BlobConfig = BlobConfig()
    eval: EvalConfig = EvalConfig()
    frame_w: int = 320
    frame_h: int = 240
    class_names: tuple[str, ...] = ()

    def class_id_for(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise CommandError(f"unknown class name {name!r}") from None


class EventLog:
    """Append-only JSON lines; prior entries survive a torn tail."""

    def __init__(self, path: str | os.PathLike | None):
        self.path = Path(path) if path is not None else None
        self._counter = 0
        self._lock = threading.Lock()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def append(self, event: str, **payload):
        with self._lock:
            self._counter += 1
            entry = {"n": self._counter, "ts": time.time(), "event": event, **payload}
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return entry

    @staticmethod
    def read(path: str | os.PathLike) -> list[dict]:
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError:
                    break  # torn tail: keep everything before it
        return entries


def _boxes_payload(labels: list[LabeledBox]) -> list[dict]:
    return [
        {"x": lb.box.x, "y": lb.box.y, "w": lb.box.w, "h": lb.box.h, "class": lb.class_id}
        for lb in labels
    ]


class Engine:
    """Owns the store and models; runs one phase at a time."""

    def __init__(
        self,
        config: EngineConfig,
        annotator: Annotator | None = None,
        event_log: EventLog | None = None,
        store: DatasetStore | None = None,
        models: ModelBundle | None = None,
        supervised_sequences: dict[str, ExplorationSequence] | None = None,
    ):
        self.config = config
        self.annotator = annotator
        self.log = event_log or EventLog(None)
        self.store = store or DatasetStore(config.frame_w, config.frame_h)
        self.models = models
        self.supervised_sequences = supervised_sequences or {}
        self._state = AppState.INFERENCE
        self._state_lock = threading.Lock()
        self._stop = threading.Event()
        self._frames_processed = 0
        self._last_stats: RefinementStats | None = None
        self._request_counter = 0

    # -- state machine ----------------------------------------------------

    @property
    def state(self) -> AppState:
        return self._state

    def status(self) -> dict:
        return {
            "state": self._state.value,
            "frames_processed": self._frames_processed,
            "stats": self._last_stats.as_dict() if self._last_stats else None,
        }

    def _enter(self, state: AppState):
        with self._state_lock:
            if self._state != AppState.INFERENCE:
                raise PhaseError(f"busy: {self._state.value}")
            self._state = state
        self._stop.clear()

    def _leave(self):
        with self._state_lock:
            self._state = AppState.INFERENCE

    def request_stop(self):
        self._stop.set()

    def handle_command(self, command: str) -> dict:
        """Textual command channel; unknown verbs never change state."""
        parts = command.strip().split()
        if not parts:
            raise CommandError("empty command")
        verb = parts[0].lower()
        if verb == "status":
            return {"ok": True, **self.status()}
        if verb == "stop":
            self.request_stop()
            return {"ok": True, "state": self._state.value, "message": "stop requested"}
        if verb == "train":
            if len(parts) != 2:
                raise CommandError("usage: train <class-name>")
            name = parts[1]
            class_id = self.config.class_id_for(name)
            seq = self.supervised_sequences.get(name)
            if seq is None:
                raise CommandError(f"no supervised sequence registered for {name!r}")
            self.run_supervised_phase(seq, class_id, seq_tag=f"supervised_{name}")
            return {"ok": True, "state": self._state.value, "message": f"trained {name}"}
        if verb == "refine":
            if len(parts) != 2:
                raise CommandError("usage: refine <sequence-path>")
            seq = load_sequence(parts[1])
            _models, stats = self.run_refinement_phase(seq, seq_tag=Path(parts[1]).stem)
            return {"ok": True, "state": self._state.value, "stats": stats.as_dict()}
        raise CommandError(f"unknown command verb {verb!r}")

    # -- supervised phase --------------------------------------------------

    def run_supervised_phase(
        self,
        seq: ExplorationSequence,
        class_id: int,
        seq_tag: str = "supervised",
        retrain: bool = True,
    ) -> ModelBundle | None:
        """Depth blob of each frame becomes the label; retrain afterwards."""
        self._enter(AppState.SUPERVISED_TRAIN)
        try:
            self.log.append("phase_start", phase="supervised", sequence=seq_tag, class_id=class_id)
            used = skipped = 0
            for frame in seq.frames:
                if self._stop.is_set():
                    break
                if frame.depth is None:
                    raise PhaseError(f"frame {frame.frame_id} has no depth map")
                try:
                    box = nearest_blob_box(frame.depth, self.config.blob)
                except NoBlobError as err:
                    skipped += 1
                    self.log.append(
                        "frame_skipped", frame_id=frame.frame_id, reason=str(err)
                    )
                    continue
                label = LabeledBox(
                    clip_box(box, self.config.frame_w, self.config.frame_h), class_id
                )
                self.store.add_frame(seq_tag, frame, [label], "auto_depth")
                self.log.append(
                    "labels_stored",
                    frame_id=frame.frame_id,
                    source="auto_depth",
                    boxes=_boxes_payload([label]),
                )
                used += 1
                self._frames_processed += 1
            if used == 0:
                raise PhaseError("no frame yielded a depth blob")
            if retrain:
                self.models = retrain_from_store(
                    self.store, self.config.kernel, self.config.mining
                )
                self.log.append("retrain", classes=self.models.classes())
            self.log.append(
                "phase_end", phase="supervised", frames_used=used, frames_skipped=skipped
            )
            return self.models
        finally:
            self._leave()

    # -- refinement phase ---------------------------------------------------

    def _make_request(self, frame, dets) -> AnnotationRequest:
        self._request_counter += 1
        names = self.config.class_names
        drawables = [
            DrawableRect(
                box=lb.box,
                color=class_color(lb.class_id),
                label=names[lb.class_id] if lb.class_id < len(names) else str(lb.class_id),
            )
            for lb in frame.ground_truth
        ]
        catalog = [
            (i, names[i] if i < len(names) else f"class_{i}")
            for i in (self.models.classes() if self.models else [])
        ]
        return AnnotationRequest(
            request_id=self._request_counter,
            frame_id=frame.frame_id,
            frame_w=frame.frame_w,
            frame_h=frame.frame_h,
            drawables=drawables,
            predicted=list(dets),
            class_catalog=catalog,
        )

    def run_refinement_phase(
        self,
        seq: ExplorationSequence,
        seq_tag: str = "refinement",
        annotator: Annotator | None = None,
    ) -> tuple[ModelBundle, RefinementStats]:
        """Detect, decide, label, and retrain once after the last frame."""
        if self.models is None or not self.models.classifiers:
            raise PhaseError("refinement requires trained models")
        annotator = annotator or self.annotator
        if annotator is None:
            raise PhaseError("refinement requires an annotator endpoint")
        self._enter(AppState.WEAKLY_SUPERVISED_TRAIN)
        try:
            self.log.append("phase_start", phase="refinement", sequence=seq_tag)
            stats = RefinementStats()
            self._last_stats = stats
            tracks: TrackSet | None = None
            # models are frozen until the post-sequence retrain, so frame
            # detections can be computed up front in one batched pass
            dets_by_frame = detect_frames(seq.frames, self.models, cfg=self.config.inference)
            for frame in seq.frames:
                if self._stop.is_set():
                    break
                dets = dets_by_frame[frame.frame_id]
                decision = select(dets, self.config.thresholds)
                self.log.append(
                    "decision",
                    frame_id=frame.frame_id,
                    kind=decision.kind.value,
                    score=decision.frame_score,
                    reason=decision.reason,
                )
                tracker_labels = tracks.propagate(frame) if tracks is not None else None

                if decision.kind == DecisionKind.SELF_LABEL:
                    labels = [LabeledBox(d.box, d.class_id) for d in dets]
                    self.store.add_frame(seq_tag, frame, labels, "self_supervised")
                    stats.ssl_images += 1
                    self.log.append(
                        "labels_stored",
                        frame_id=frame.frame_id,
                        source="self_supervised",
                        boxes=_boxes_payload(labels),
                    )
                elif decision.kind == DecisionKind.QUERY_HUMAN:
                    stats.total_al_queries_images += 1
                    gate = "low"
                    if tracks is not None and tracker_labels:
                        gate = quality_gate(
                            tracker_labels, self.config.tracker, tracks.any_unhealthy
                        )
                    if gate == "ok":
                        labels = [
                            LabeledBox(
                                clip_box(lb.box, self.config.frame_w, self.config.frame_h),
                                lb.class_id,
                            )
                            for lb in tracker_labels
                        ]
                        self.store.add_frame(seq_tag, frame, labels, "tracker")
                        stats.tracker_images += 1
                        stats.total_al_queries_boxes += len(labels)
                        self.log.append(
                            "labels_stored",
                            frame_id=frame.frame_id,
                            source="tracker",
                            boxes=_boxes_payload(labels),
                        )
                    else:
                        request = self._make_request(frame, dets)
                        self.log.append(
                            "annotation_request",
                            request_id=request.request_id,
                            frame_id=frame.frame_id,
                            n_predicted=len(dets),
                            gate=gate,
                        )
                        try:
                            response = annotator.annotate(
                                AnnotationQuery(request, frame.ground_truth)
                            )
                        except AnnotationTimeout:
                            stats.timeout_images += 1
                            self.log.append(
                                "annotation_timeout",
                                request_id=request.request_id,
                                frame_id=frame.frame_id,
                            )
                        else:
                            self.log.append(
                                "annotation_response",
                                request_id=request.request_id,
                                frame_id=frame.frame_id,
                                n_boxes=len(response.boxes),
                            )
                            if response.boxes:
                                self.store.add_frame(
                                    seq_tag, frame, response.boxes, "human"
                                )
                                stats.human_images += 1
                                stats.human_boxes += len(response.boxes)
                                stats.total_al_queries_boxes += len(response.boxes)
                                self.log.append(
                                    "labels_stored",
                                    frame_id=frame.frame_id,
                                    source="human",
                                    boxes=_boxes_payload(response.boxes),
                                )
                                tracks = init_tracks(response.boxes, self.config.tracker)
                else:
                    stats.discarded_images += 1
                stats.frames_processed += 1
                self._frames_processed += 1

            stats.pseudo_label_map = self._pseudo_label_map(seq, seq_tag)
            self.models = retrain_from_store(
                self.store, self.config.kernel, self.config.mining
            )
            self.log.append("retrain", classes=self.models.classes())
            stats.check_invariants()
            self.log.append("phase_end", phase="refinement", stats=stats.as_dict())
            self._last_stats = stats
            return self.models, stats
        finally:
            self._leave()

    def _pseudo_label_map(self, seq: ExplorationSequence, seq_tag: str) -> float | None:
        """Quality of non-human labels stored this phase, against sequence gt."""
        if not any(fr.ground_truth for fr in seq.frames):
            return None
        gt_by_frame = {fr.frame_id: fr.ground_truth for fr in seq.frames}
        labeled_frames: dict[int, list] = {}
        for stored in self.store.frames:
            if stored.sequence != seq_tag or stored.source not in ("tracker", "self_supervised"):
                continue
            labeled_frames[stored.frame_id] = [
                Detection(lb.box, lb.class_id, 1.0) for lb in stored.labels
            ]
        if not labeled_frames:
            return None
        report = evaluate(
            labeled_frames,
            {f: gt_by_frame[f] for f in labeled_frames},
            self.config.eval,
        )
        return report.map_score


def stats_from_log(path: str | os.PathLike) -> RefinementStats:
    """Rebuild refinement statistics by folding the event log."""
    stats = RefinementStats()
    for entry in EventLog.read(path):
        event = entry["event"]
        if event == "decision":
            stats.frames_processed += 1
            if entry["kind"] == DecisionKind.QUERY_HUMAN.value:
                stats.total_al_queries_images += 1
            elif entry["kind"] == DecisionKind.SELF_LABEL.value:
                stats.ssl_images += 1
            else:
                stats.discarded_images += 1
        elif event == "labels_stored":
            if entry["source"] == "human":
                stats.human_images += 1
                stats.human_boxes += len(entry["boxes"])
                stats.total_al_queries_boxes += len(entry["boxes"])
            elif entry["source"] == "tracker":
                stats.tracker_images += 1
                stats.total_al_queries_boxes += len(entry["boxes"])
        elif event == "annotation_timeout":
            stats.timeout_images += 1
        elif event == "phase_end" and entry.get("phase") == "refinement":
            stats.pseudo_label_map = entry["stats"].get("pseudo_label_map")
    return stats
