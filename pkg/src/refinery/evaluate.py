"""VOC-2007-style detection evaluation: greedy matching, 11-point AP, mAP.

Scores only matter through their ranking; ties break deterministically by
(frame_id, insertion order) so reported numbers are reproducible.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .boxes import BoundingBox, Detection, LabeledBox, iou

__all__ = [
    "EvalConfig",
    "EvalReport",
    "match_detections",
    "average_precision",
    "evaluate",
    "experiment_report",
]

_RECALL_LEVELS = [i / 10.0 for i in range(11)]


@dataclass(frozen=True)
class EvalConfig:
    iou_thresh: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.iou_thresh < 1.0:
            raise ValueError("iou_thresh must lie in (0, 1)")


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: dict[int, float]
    map_score: float
    n_gt: dict[int, int]
    n_detections: dict[int, int]

    def as_dict(self) -> dict:
        return {
            "mAP": self.map_score,
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "n_gt": {str(k): v for k, v in sorted(self.n_gt.items())},
            "n_detections": {str(k): v for k, v in sorted(self.n_detections.items())},
        }


def match_detections(
    dets: Sequence[tuple[int, BoundingBox, float]],
    gts_by_frame: Mapping[int, Sequence[BoundingBox]],
    iou_thresh: float,
) -> list[bool]:
    """Greedy TP/FP flags for one class of detections.

    Each detection, visited in descending score order (ties by frame_id then
    input order), claims the unmatched ground-truth box of highest IoU at or
    above the threshold in its frame. Flags come back in that visit order.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], dets[i][0], i))
    claimed: dict[int, set[int]] = {f: set() for f in gts_by_frame}
    flags: list[bool] = []
    for i in order:
        frame_id, box, _score = dets[i]
        gts = gts_by_frame.get(frame_id, ())
        best_j, best_iou = -1, 0.0
        for j, gt in enumerate(gts):
            if j in claimed.get(frame_id, set()):
                continue
            v = iou(box, gt)
            if v > best_iou:
                best_j, best_iou = j, v
        if best_j >= 0 and best_iou >= iou_thresh:
            claimed.setdefault(frame_id, set()).add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags: Sequence[bool], n_gt: int, cfg: EvalConfig = EvalConfig()) -> float | None:
    """11-point interpolated AP from ranked TP/FP flags.

    Returns None when n_gt == 0 (the class is excluded from mAP).
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    if n_gt == 0:
        return None
    precisions: list[float] = []
    recalls: list[float] = []
    tp = 0
    for k, flag in enumerate(flags, start=1):
        tp += bool(flag)
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    total = 0.0
    for level in _RECALL_LEVELS:
        best = 0.0
        for p, r in zip(precisions, recalls):
            if r >= level and p > best:
                best = p
        total += best
    return total / 11.0


def evaluate(
    dets_by_frame: Mapping[int, Sequence[Detection]],
    gts_by_frame: Mapping[int, Sequence[LabeledBox]],
    cfg: EvalConfig = EvalConfig(),
) -> EvalReport:
    """Per-class AP and mAP over aligned frame maps."""
    class_ids = set()
    for labels in gts_by_frame.values():
        class_ids.update(lb.class_id for lb in labels)
    for dets in dets_by_frame.values():
        class_ids.update(d.class_id for d in dets)

    per_class_ap: dict[int, float] = {}
    n_gt: dict[int, int] = {}
    n_det: dict[int, int] = {}
    for c in sorted(class_ids):
        gts_c = {
            f: [lb.box for lb in labels if lb.class_id == c]
            for f, labels in gts_by_frame.items()
        }
        dets_c = [
            (f, d.box, d.score)
            for f in sorted(dets_by_frame)
            for d in dets_by_frame[f]
            if d.class_id == c
        ]
        count_gt = sum(len(v) for v in gts_c.values())
        n_gt[c] = count_gt
        n_det[c] = len(dets_c)
        ap = average_precision(match_detections(dets_c, gts_c, cfg.iou_thresh), count_gt, cfg)
        if ap is not None:
            per_class_ap[c] = ap
    map_score = (
        sum(per_class_ap.values()) / len(per_class_ap) if per_class_ap else 0.0
    )
    return EvalReport(per_class_ap=per_class_ap, map_score=map_score, n_gt=n_gt, n_detections=n_det)


@dataclass(frozen=True)
class GroupReportRow:
    group: str
    before_map: float
    after_map: float
    human_images: int
    human_boxes: int
    al_queries: int
    ssl_images: int
    pseudo_label_map: float
    heldout_before: float
    heldout_after: float

    def as_dict(self) -> dict:
        return {
            "group": self.group,
            "before_map": self.before_map,
            "after_map": self.after_map,
            "human_images": self.human_images,
            "human_boxes": self.human_boxes,
            "al_queries": self.al_queries,
            "ssl_images": self.ssl_images,
            "pseudo_label_map": self.pseudo_label_map,
            "heldout_before": self.heldout_before,
            "heldout_after": self.heldout_after,
        }


def experiment_report(
    group: str,
    before_eval: EvalReport,
    after_eval: EvalReport,
    heldout_before: EvalReport,
    heldout_after: EvalReport,
    stats,
) -> GroupReportRow:
    """Assemble one before/after row for a scene group."""
    pseudo = stats.pseudo_label_map
    return GroupReportRow(
        group=group,
        before_map=before_eval.map_score,
        after_map=after_eval.map_score,
        human_images=stats.human_images,
        human_boxes=stats.human_boxes,
        al_queries=stats.total_al_queries_images,
        ssl_images=stats.ssl_images,
        pseudo_label_map=pseudo if pseudo is not None else float("nan"),
        heldout_before=heldout_before.map_score,
        heldout_after=heldout_after.map_score,
    )
