"""Synthetic table-top world: scenes, exploration sequences, features, depth.

Stands in for the robot's cameras and exploratory movements. Each class has a
fixed unit-norm prototype vector drawn from the world seed; a region
proposal's feature is the overlap-weighted blend of the prototypes it covers
plus a background prototype, optional per-class domain-shift displacement and
Gaussian noise. Separability therefore degrades smoothly as the shift
magnitude grows, which is what the refinement loop has to recover from.
"""

from __future__ import annotations

import gzip
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .boxes import BoundingBox, LabeledBox, clip_box, pairwise_iou
from .depth import DepthMap

__all__ = [
    "WorldConfig",
    "SceneObject",
    "Viewpoint",
    "FrameRecord",
    "ExplorationSequence",
    "DomainShift",
    "class_prototypes",
    "generate_scene",
    "render_frame",
    "make_trajectory",
    "make_exploration_sequence",
    "synth_depth_map",
    "save_sequence",
    "load_sequence",
    "SequenceSchemaError",
]

BACKGROUND_DEPTH = 2.0
HANDHELD_DEPTH = 0.5
RESTING_DEPTH = 1.2


@dataclass(frozen=True)
class WorldConfig:
    num_classes: int = 4
    objects_per_scene: int = 4
    frame_w: int = 320
    frame_h: int = 240
    feature_dim: int = 64
    noise_sigma: float = 0.05
    domain_shift_magnitude: float = 1.0
    jitter_sigma: float = 2.0
    proposals_per_frame: int = 60
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.objects_per_scene, self.proposals_per_frame) < 1:
            raise ValueError("counts must be >= 1")
        if self.frame_w < 8 or self.frame_h < 8:
            raise ValueError("frame too small")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2")
        if self.noise_sigma < 0 or self.jitter_sigma < 0 or self.domain_shift_magnitude < 0:
            raise ValueError("sigmas and shift magnitude must be >= 0")


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    center: tuple[float, float]
    size: tuple[float, float]
    prototype: np.ndarray

    def box(self) -> BoundingBox:
        cx, cy = self.center
        w, h = self.size
        return BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True)
class Viewpoint:
    index: int
    translation: tuple[float, float] = (0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    ground_truth: list[LabeledBox]
    proposals: list[tuple[BoundingBox, np.ndarray]]
    depth: DepthMap | None = None
    frame_w: int = 320
    frame_h: int = 240

    def proposal_boxes(self) -> np.ndarray:
        return np.array([[b.x, b.y, b.w, b.h] for b, _ in self.proposals])

    def proposal_features(self) -> np.ndarray:
        return np.array([f for _, f in self.proposals])


@dataclass(frozen=True)
class ExplorationSequence:
    frames: list[FrameRecord]
    domain_tag: str = "tabletop"

    def __post_init__(self):
        ids = [f.frame_id for f in self.frames]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("frame_ids must be strictly increasing")


@dataclass(frozen=True)
class DomainShift:
    """Constant per-sequence feature displacement, one vector per class.

    Every vector has norm equal to the shift magnitude, so a proposal purely
    covering one object moves by exactly that magnitude in feature space.
    """

    per_class: dict[int, np.ndarray] = field(default_factory=dict)
    background: np.ndarray | None = None

    @staticmethod
    def none() -> "DomainShift":
        return DomainShift()

    @staticmethod
    def random(magnitude: float, class_ids, feature_dim: int, seed: int) -> "DomainShift":
        rng = np.random.default_rng(seed)
        def unit():
            v = rng.normal(size=feature_dim)
            return v / np.linalg.norm(v)
        per_class = {int(c): magnitude * unit() for c in sorted(class_ids)}
        return DomainShift(per_class=per_class, background=magnitude * unit())

    def for_class(self, class_id: int, dim: int) -> np.ndarray:
        v = self.per_class.get(class_id)
        return v if v is not None else np.zeros(dim)

    def for_background(self, dim: int) -> np.ndarray:
        return self.background if self.background is not None else np.zeros(dim)


def class_prototypes(config: WorldConfig) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm prototype per class plus a background prototype.

    Derived only from the world seed so the same object keeps its identity
    across handheld and table-top sequences.
    """
    rng = np.random.default_rng([config.seed, 7])
    protos = rng.normal(size=(config.num_classes, config.feature_dim))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    bg = rng.normal(size=config.feature_dim)
    bg /= np.linalg.norm(bg)
    return protos, bg


def generate_scene(
    config: WorldConfig, rng_seed: int, class_ids: list[int] | None = None
) -> list[SceneObject]:
    """Place objects_per_scene distinct-class objects inside the frame.

    Placement rejects pairs that fully contain each other or overlap with
    IoU above 0.3; deterministic for a given (config, rng_seed).
    """
    if config.objects_per_scene > config.num_classes:
        raise ValueError(
            f"objects_per_scene {config.objects_per_scene} exceeds num_classes {config.num_classes}"
        )
    rng = np.random.default_rng([config.seed, rng_seed, 11])
    protos, _bg = class_prototypes(config)
    if class_ids is None:
        class_ids = sorted(
            int(c) for c in rng.choice(config.num_classes, config.objects_per_scene, replace=False)
        )
    else:
        if len(set(class_ids)) != len(class_ids):
            raise ValueError("class_ids must be distinct")
        if any(c < 0 or c >= config.num_classes for c in class_ids):
            raise ValueError("class_ids out of range")

    min_side = 0.14 * min(config.frame_w, config.frame_h)
    max_side = 0.30 * min(config.frame_w, config.frame_h)
    placed: list[SceneObject] = []
    for c in class_ids:
        for _attempt in range(200):
            w = float(rng.uniform(min_side, max_side))
            h = float(rng.uniform(min_side, max_side))
            # keep a margin so mild viewpoint motion cannot push objects out
            margin_x = 0.18 * config.frame_w + w / 2.0
            margin_y = 0.18 * config.frame_h + h / 2.0
            cx = float(rng.uniform(margin_x, config.frame_w - margin_x))
            cy = float(rng.uniform(margin_y, config.frame_h - margin_y))
            candidate = SceneObject(int(c), (cx, cy), (w, h), protos[c])
            if _placement_ok(candidate, placed):
                placed.append(candidate)
                break
        else:
            raise RuntimeError("could not place scene objects without heavy overlap")
    return placed


def _placement_ok(candidate: SceneObject, placed: list[SceneObject]) -> bool:
    cb = candidate.box()
    for other in placed:
        ob = other.box()
        overlap = pairwise_iou(
            np.array([[cb.x, cb.y, cb.w, cb.h]]), np.array([[ob.x, ob.y, ob.w, ob.h]])
        )[0, 0]
        if overlap > 0.3:
            return False
        if _contains(cb, ob) or _contains(ob, cb):
            return False
    return True


def _contains(outer: BoundingBox, inner: BoundingBox) -> bool:
    return (
        outer.x <= inner.x
        and outer.y <= inner.y
        and outer.x2 >= inner.x2
        and outer.y2 >= inner.y2
    )


def transform_box(box: BoundingBox, viewpoint: Viewpoint, config: WorldConfig) -> BoundingBox:
    """View transform: scale about the frame center, then translate."""
    fcx, fcy = config.frame_w / 2.0, config.frame_h / 2.0
    cx, cy = box.center
    ncx = fcx + viewpoint.scale * (cx - fcx) + viewpoint.translation[0]
    ncy = fcy + viewpoint.scale * (cy - fcy) + viewpoint.translation[1]
    w = box.w * viewpoint.scale
    h = box.h * viewpoint.scale
    return BoundingBox(ncx - w / 2.0, ncy - h / 2.0, w, h)


def _overlap_fractions(prop_boxes: np.ndarray, obj_boxes: np.ndarray) -> np.ndarray:
    """(n_props, n_objs) intersection area over proposal area."""
    if obj_boxes.shape[0] == 0:
        return np.zeros((prop_boxes.shape[0], 0))
    px2 = prop_boxes[:, 0] + prop_boxes[:, 2]
    py2 = prop_boxes[:, 1] + prop_boxes[:, 3]
    ox2 = obj_boxes[:, 0] + obj_boxes[:, 2]
    oy2 = obj_boxes[:, 1] + obj_boxes[:, 3]
    ix = np.minimum(px2[:, None], ox2[None, :]) - np.maximum(
        prop_boxes[:, None, 0], obj_boxes[None, :, 0]
    )
    iy = np.minimum(py2[:, None], oy2[None, :]) - np.maximum(
        prop_boxes[:, None, 1], obj_boxes[None, :, 1]
    )
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    areas = prop_boxes[:, 2] * prop_boxes[:, 3]
    return inter / areas[:, None]


def render_frame(
    scene: list[SceneObject],
    viewpoint: Viewpoint,
    shift: DomainShift | None,
    config: WorldConfig,
    rng: np.random.Generator,
    depth: DepthMap | None = None,
) -> FrameRecord:
    """Ground truth plus jittered and background proposals with features."""
    shift = shift or DomainShift.none()
    d = config.feature_dim
    _protos, bg_proto = class_prototypes(config)

    gt_boxes = [
        clip_box(transform_box(obj.box(), viewpoint, config), config.frame_w, config.frame_h)
        for obj in scene
    ]
    ground_truth = [LabeledBox(b, obj.class_id) for b, obj in zip(gt_boxes, scene)]

    n_background = config.proposals_per_frame // 3
    n_jittered = config.proposals_per_frame - n_background
    boxes: list[BoundingBox] = []
    if scene:
        per_obj = np.full(len(scene), n_jittered // len(scene))
        per_obj[: n_jittered % len(scene)] += 1
        for gt, count in zip(gt_boxes, per_obj):
            offs = rng.normal(0.0, config.jitter_sigma, size=(int(count), 4))
            for off in offs:
                x = gt.x + off[0]
                y = gt.y + off[1]
                w = max(gt.w + off[2], 2.0)
                h = max(gt.h + off[3], 2.0)
                boxes.append(clip_box(BoundingBox(x, y, w, h), config.frame_w, config.frame_h))
    while len(boxes) < config.proposals_per_frame:
        w = float(rng.uniform(0.05, 0.4) * config.frame_w)
        h = float(rng.uniform(0.05, 0.4) * config.frame_h)
        x = float(rng.uniform(0.0, config.frame_w - w))
        y = float(rng.uniform(0.0, config.frame_h - h))
        boxes.append(BoundingBox(x, y, w, h))

    prop_arr = np.array([[b.x, b.y, b.w, b.h] for b in boxes])
    obj_arr = np.array([[b.x, b.y, b.w, b.h] for b in gt_boxes]).reshape(-1, 4)
    fractions = _overlap_fractions(prop_arr, obj_arr)

    shifted_protos = np.array(
        [obj.prototype + shift.for_class(obj.class_id, d) for obj in scene]
    ).reshape(-1, d)
    shifted_bg = bg_proto + shift.for_background(d)

    if scene:
        features = fractions @ shifted_protos
        bg_weight = 1.0 - fractions.max(axis=1)
    else:
        features = np.zeros((len(boxes), d))
        bg_weight = np.ones(len(boxes))
    features = features + bg_weight[:, None] * shifted_bg[None, :]
    if config.noise_sigma > 0:
        features = features + rng.normal(0.0, config.noise_sigma, size=features.shape)

    proposals = [(b, features[i]) for i, b in enumerate(boxes)]
    return FrameRecord(
        frame_id=viewpoint.index,
        ground_truth=ground_truth,
        proposals=proposals,
        depth=depth,
        frame_w=config.frame_w,
        frame_h=config.frame_h,
    )


def make_trajectory(
    config: WorldConfig,
    n_frames: int,
    seed: int,
    max_translation: float = 0.06,
    scale_span: float = 0.06,
) -> list[Viewpoint]:
    """Smooth pan/zoom sweep: sinusoidal drift with seeded phases.

    Per-frame motion stays within a few pixels so tracked boxes never jump.
    """
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    cycles = rng.uniform(1.0, 2.5, size=3)
    amp_x = max_translation * config.frame_w
    amp_y = max_translation * config.frame_h
    views = []
    for i in range(n_frames):
        t = i / max(n_frames - 1, 1)
        tx = amp_x * np.sin(2 * np.pi * cycles[0] * t + phase[0])
        ty = amp_y * np.sin(2 * np.pi * cycles[1] * t + phase[1])
        s = 1.0 + scale_span * np.sin(2 * np.pi * cycles[2] * t + phase[2])
        views.append(Viewpoint(index=i, translation=(float(tx), float(ty)), scale=float(s)))
    return views


def make_exploration_sequence(
    scene: list[SceneObject],
    trajectory: list[Viewpoint],
    domain_shift_magnitude: float,
    config: WorldConfig,
    seq_seed: int = 0,
    domain_tag: str = "tabletop",
    with_depth: bool = False,
    handheld_index: int = 0,
) -> ExplorationSequence:
    """One frame per viewpoint under a fixed per-sequence domain shift."""
    if not trajectory:
        raise ValueError("trajectory must be nonempty")
    if domain_shift_magnitude > 0:
        shift = DomainShift.random(
            domain_shift_magnitude,
            [obj.class_id for obj in scene],
            config.feature_dim,
            seed=seq_seed,
        )
    else:
        shift = DomainShift.none()
    frames = []
    for vp in trajectory:
        rng = np.random.default_rng([config.seed, seq_seed, vp.index, 29])
        depth = synth_depth_map(scene, vp, config, handheld_index) if with_depth else None
        frames.append(render_frame(scene, vp, shift, config, rng, depth=depth))
    return ExplorationSequence(frames=frames, domain_tag=domain_tag)


def synth_depth_map(
    scene: list[SceneObject],
    viewpoint: Viewpoint,
    config: WorldConfig,
    handheld_index: int = 0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DepthMap:
    """Plane at 2.0 m, one handheld object at 0.5 m, the rest at 1.2 m."""
    grid = np.full((config.frame_h, config.frame_w), BACKGROUND_DEPTH)
    order = [i for i in range(len(scene)) if i != handheld_index]
    if scene:
        order.append(min(handheld_index, len(scene) - 1))
    for i in order:
        obj = scene[i]
        box = clip_box(
            transform_box(obj.box(), viewpoint, config), config.frame_w, config.frame_h
        )
        x0, y0 = int(round(box.x)), int(round(box.y))
        x1, y1 = int(round(box.x2)), int(round(box.y2))
        value = HANDHELD_DEPTH if i == handheld_index else RESTING_DEPTH
        grid[max(y0, 0) : y1, max(x0, 0) : x1] = value
    if noise_sigma > 0 and rng is not None:
        grid = np.clip(grid + rng.normal(0.0, noise_sigma, size=grid.shape), 0.01, None)
    return DepthMap(width=config.frame_w, height=config.frame_h, values=grid.ravel())


class SequenceSchemaError(ValueError):
    """A sequence document is missing required keys or has a bad version."""


def _open_for(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_sequence(seq: ExplorationSequence, path: str | os.PathLike):
    """Write one JSON document; gzip when the path ends in .gz."""
    frames = []
    for fr in seq.frames:
        depth = None
        if fr.depth is not None:
            depth = {
                "w": fr.depth.width,
                "h": fr.depth.height,
                "values": [float(v) for v in fr.depth.grid().ravel()],
            }
        frames.append(
            {
                "frame_id": fr.frame_id,
                "ground_truth": [
                    {"x": lb.box.x, "y": lb.box.y, "w": lb.box.w, "h": lb.box.h, "class": lb.class_id}
                    for lb in fr.ground_truth
                ],
                "proposals": [
                    {
                        "box": {"x": b.x, "y": b.y, "w": b.w, "h": b.h},
                        "feature": [float(v) for v in f],
                    }
                    for b, f in fr.proposals
                ],
                "depth": depth,
            }
        )
    doc = {
        "schema_version": 1,
        "domain_tag": seq.domain_tag,
        "frame_w": seq.frames[0].frame_w if seq.frames else 0,
        "frame_h": seq.frames[0].frame_h if seq.frames else 0,
        "frames": frames,
    }
    with _open_for(path, "w") as fh:
        json.dump(doc, fh)


def load_sequence(path: str | os.PathLike) -> ExplorationSequence:
    """Read a sequence document back; schema violations raise, never partial."""
    with _open_for(path, "r") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("schema_version") != 1:
        raise SequenceSchemaError(f"unsupported schema_version in {path}")
    for key in ("domain_tag", "frames"):
        if key not in doc:
            raise SequenceSchemaError(f"missing key {key!r} in {path}")
    frame_w = int(doc.get("frame_w", 320))
    frame_h = int(doc.get("frame_h", 240))
    frames = []
    for fr in doc["frames"]:
        for key in ("frame_id", "ground_truth", "proposals"):
            if key not in fr:
                raise SequenceSchemaError(f"frame missing key {key!r} in {path}")
        gt = [
            LabeledBox(BoundingBox(g["x"], g["y"], g["w"], g["h"]), int(g["class"]))
            for g in fr["ground_truth"]
        ]
        proposals = [
            (
                BoundingBox(p["box"]["x"], p["box"]["y"], p["box"]["w"], p["box"]["h"]),
                np.array(p["feature"], dtype=np.float64),
            )
            for p in fr["proposals"]
        ]
        depth = None
        if fr.get("depth") is not None:
            dd = fr["depth"]
            depth = DepthMap(width=int(dd["w"]), height=int(dd["h"]), values=np.array(dd["values"]))
        frames.append(
            FrameRecord(
                frame_id=int(fr["frame_id"]),
                ground_truth=gt,
                proposals=proposals,
                depth=depth,
                frame_w=frame_w,
                frame_h=frame_h,
            )
        )
    return ExplorationSequence(frames=frames, domain_tag=str(doc["domain_tag"]))
