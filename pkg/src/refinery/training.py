"""Builds per-class training sets from labeled frames and fits the models.

Negatives vastly outnumber positives in detection, so classifiers are fit
with staged hard-negative mining: the negative pool is split into batches,
each intermediate model scores the next batch, and only negatives the model
gets wrong join the training set. Positives always participate in every fit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes import BoundingBox, LabeledBox, boxes_to_array, encode_deltas, pairwise_iou
from .kernels import (
    ClassifierModel,
    KernelConfig,
    RefinerModel,
    fit_classifier,
    fit_refiner,
    load_classifier,
    load_refiner,
    predict_raw,
    save_classifier,
    save_refiner,
)
from .world import ExplorationSequence, FrameRecord

__all__ = [
    "MiningConfig",
    "RegionAssignment",
    "TrainingAssembly",
    "StoredFrame",
    "DatasetStore",
    "ModelBundle",
    "assign_regions",
    "build_assembly",
    "fit_models_with_mining",
    "retrain_from_store",
]

LABEL_SOURCES = ("auto_depth", "human", "tracker", "self_supervised")


@dataclass(frozen=True)
class MiningConfig:
    pos_iou: float = 0.6
    neg_iou_max: float = 0.3
    n_batches: int = 10
    batch_size: int = 2000
    hard_score: float = 0.0
    shuffle_seed: int = 0
    refiner_lambda: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.neg_iou_max < self.pos_iou <= 1.0:
            raise ValueError("need 0 < neg_iou_max < pos_iou <= 1")
        if self.n_batches < 1 or self.batch_size < 1:
            raise ValueError("n_batches and batch_size must be >= 1")


@dataclass
class RegionAssignment:
    """Per-frame region labels: class positives and shared negatives."""

    positives: dict[int, list[tuple[np.ndarray, BoundingBox, BoundingBox]]]
    negative_features: np.ndarray  # (n_neg, d)


def assign_regions(
    proposals: list[tuple[BoundingBox, np.ndarray]],
    ground_truth: list[LabeledBox],
    cfg: MiningConfig,
) -> RegionAssignment:
    """Label proposals against one frame's ground truth.

    A proposal is a positive for class c when its best IoU against a class-c
    box reaches pos_iou (the best match is kept for the refiner targets); it
    is a negative when its IoU against every box of any class stays below
    neg_iou_max. The band in between is ignored.
    """
    if not proposals:
        raise ValueError("proposals must be nonempty")
    prop_boxes = boxes_to_array([b for b, _ in proposals])
    feats = np.array([f for _, f in proposals])
    positives: dict[int, list] = {}
    if ground_truth:
        gt_boxes = boxes_to_array([lb.box for lb in ground_truth])
        mat = pairwise_iou(prop_boxes, gt_boxes)
        best_overall = mat.max(axis=1)
        for c in sorted({lb.class_id for lb in ground_truth}):
            cols = [j for j, lb in enumerate(ground_truth) if lb.class_id == c]
            sub = mat[:, cols]
            best = sub.max(axis=1)
            arg = sub.argmax(axis=1)
            hits = np.nonzero(best >= cfg.pos_iou)[0]
            if hits.size:
                positives[c] = [
                    (feats[i], proposals[i][0], ground_truth[cols[arg[i]]].box) for i in hits
                ]
        neg_mask = best_overall < cfg.neg_iou_max
    else:
        neg_mask = np.ones(len(proposals), dtype=bool)
    return RegionAssignment(positives=positives, negative_features=feats[neg_mask])


@dataclass
class TrainingAssembly:
    """Pooled per-class positives plus the batched shared negative pool."""

    pos_features: dict[int, np.ndarray]       # class -> (P, d)
    pos_deltas: dict[int, np.ndarray]         # class -> (P, 4)
    negative_batches: dict[int, list[np.ndarray]]  # class -> n_batches arrays

    def classes(self) -> list[int]:
        return sorted(self.pos_features)


@dataclass(frozen=True)
class StoredFrame:
    sequence: str
    frame_id: int
    source: str
    labels: list[LabeledBox]
    proposals: list[tuple[BoundingBox, np.ndarray]]


class DatasetStore:
    """Accumulates labeled frames across phases; single writer, many readers."""

    def __init__(self, frame_w: int, frame_h: int):
        self.frame_w = frame_w
        self.frame_h = frame_h
        self._frames: list[StoredFrame] = []
        self._seen: set[tuple[str, int]] = set()

    def __len__(self) -> int:
        return len(self._frames)

    @property
    def frames(self) -> list[StoredFrame]:
        return list(self._frames)

    def add_frame(
        self,
        sequence: str,
        frame: FrameRecord,
        labels: list[LabeledBox],
        source: str,
    ):
        if source not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {source!r}")
        key = (sequence, frame.frame_id)
        if key in self._seen:
            raise ValueError(f"duplicate frame {key} in store")
        for lb in labels:
            b = lb.box
            if b.x < -1e-6 or b.y < -1e-6 or b.x2 > self.frame_w + 1e-6 or b.y2 > self.frame_h + 1e-6:
                raise ValueError(f"label outside frame bounds: {b}")
        self._seen.add(key)
        self._frames.append(
            StoredFrame(
                sequence=sequence,
                frame_id=frame.frame_id,
                source=source,
                labels=list(labels),
                proposals=list(frame.proposals),
            )
        )

    def labels_by_source(self, sources: tuple[str, ...]) -> dict[int, list[LabeledBox]]:
        out: dict[int, list[LabeledBox]] = {}
        for fr in self._frames:
            if fr.source in sources:
                out.setdefault(fr.frame_id, []).extend(fr.labels)
        return out

    def positive_counts(self, cfg: MiningConfig) -> dict[int, int]:
        counts: dict[int, int] = {}
        for fr in self._frames:
            assignment = assign_regions(fr.proposals, fr.labels, cfg)
            for c, rows in assignment.positives.items():
                counts[c] = counts.get(c, 0) + len(rows)
        return counts

    def save(self, directory: str | os.PathLike):
        """Manifest plus one sequence file per originating sequence tag."""
        from .world import save_sequence

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        by_seq: dict[str, list[StoredFrame]] = {}
        for fr in self._frames:
            by_seq.setdefault(fr.sequence, []).append(fr)
        manifest = {"schema_version": 1, "frame_w": self.frame_w, "frame_h": self.frame_h, "frames": []}
        for seq_tag, frames in sorted(by_seq.items()):
            frames = sorted(frames, key=lambda f: f.frame_id)
            records = [
                FrameRecord(
                    frame_id=f.frame_id,
                    ground_truth=f.labels,
                    proposals=f.proposals,
                    frame_w=self.frame_w,
                    frame_h=self.frame_h,
                )
                for f in frames
            ]
            fname = f"{seq_tag}.json.gz"
            save_sequence(ExplorationSequence(frames=records, domain_tag=seq_tag), directory / fname)
            manifest["frames"].extend(
                {"sequence": seq_tag, "frame_id": f.frame_id, "source": f.source} for f in frames
            )
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @staticmethod
    def load(directory: str | os.PathLike) -> "DatasetStore":
        from .world import load_sequence

        directory = Path(directory)
        with open(directory / "manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        store = DatasetStore(frame_w=int(manifest["frame_w"]), frame_h=int(manifest["frame_h"]))
        sources = {(e["sequence"], e["frame_id"]): e["source"] for e in manifest["frames"]}
        for seq_tag in sorted({e["sequence"] for e in manifest["frames"]}):
            seq = load_sequence(directory / f"{seq_tag}.json.gz")
            for fr in seq.frames:
                store.add_frame(
                    sequence=seq_tag,
                    frame=fr,
                    labels=fr.ground_truth,
                    source=sources[(seq_tag, fr.frame_id)],
                )
        return store


@dataclass
class ModelBundle:
    """Per-class classifier/refiner pairs produced by one retrain."""

    classifiers: dict[int, ClassifierModel] = field(default_factory=dict)
    refiners: dict[int, RefinerModel] = field(default_factory=dict)
    skipped_classes: list[int] = field(default_factory=list)

    def classes(self) -> list[int]:
        return sorted(self.classifiers)

    def save(self, directory: str | os.PathLike):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for c, model in self.classifiers.items():
            save_classifier(model, directory / f"class_{c:03d}.classifier.json")
        for c, model in self.refiners.items():
            save_refiner(model, directory / f"class_{c:03d}.refiner.json")
        meta = {"classes": self.classes(), "skipped_classes": self.skipped_classes}
        with open(directory / "models.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @staticmethod
    def load(directory: str | os.PathLike) -> "ModelBundle":
        directory = Path(directory)
        with open(directory / "models.json", "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        bundle = ModelBundle(skipped_classes=list(meta.get("skipped_classes", [])))
        for c in meta["classes"]:
            bundle.classifiers[c] = load_classifier(directory / f"class_{c:03d}.classifier.json")
            bundle.refiners[c] = load_refiner(directory / f"class_{c:03d}.refiner.json")
        return bundle


def build_assembly(frames: list[StoredFrame], cfg: MiningConfig) -> TrainingAssembly:
    """Pool region assignments over frames and batch the negative pool.

    The pool is capped at n_batches * batch_size by a seeded subsample, then
    partitioned per class with a class-derived shuffle.
    """
    pos_feats: dict[int, list[np.ndarray]] = {}
    pos_deltas: dict[int, list[np.ndarray]] = {}
    neg_chunks: list[np.ndarray] = []
    for fr in frames:
        assignment = assign_regions(fr.proposals, fr.labels, cfg)
        for c, rows in assignment.positives.items():
            for feat, prop, gt in rows:
                d = encode_deltas(prop, gt)
                pos_feats.setdefault(c, []).append(feat)
                pos_deltas.setdefault(c, []).append(np.array([d.dx, d.dy, d.dw, d.dh]))
        if assignment.negative_features.shape[0]:
            neg_chunks.append(assignment.negative_features)

    if neg_chunks:
        pool = np.vstack(neg_chunks)
    else:
        pool = np.zeros((0, 0))
    cap = cfg.n_batches * cfg.batch_size
    if pool.shape[0] > cap:
        rng = np.random.default_rng([cfg.shuffle_seed, 101])
        pool = pool[rng.choice(pool.shape[0], cap, replace=False)]

    negative_batches: dict[int, list[np.ndarray]] = {}
    classes = sorted(pos_feats)
    for c in classes:
        rng = np.random.default_rng([cfg.shuffle_seed, c, 13])
        perm = rng.permutation(pool.shape[0])
        shuffled = pool[perm]
        batches = [
            shuffled[i :: cfg.n_batches] for i in range(cfg.n_batches)
        ]
        negative_batches[c] = [b for b in batches]
    return TrainingAssembly(
        pos_features={c: np.array(v) for c, v in pos_feats.items()},
        pos_deltas={c: np.array(v) for c, v in pos_deltas.items()},
        negative_batches=negative_batches,
    )


def _fit_class(
    pos: np.ndarray,
    hard: np.ndarray,
    kernel_cfg: KernelConfig,
    stage_seed: int,
) -> ClassifierModel:
    x = np.vstack([pos, hard]) if hard.size else pos
    y = np.concatenate([np.ones(pos.shape[0]), -np.ones(hard.shape[0] if hard.size else 0)])
    cfg = KernelConfig(
        sigma=kernel_cfg.sigma,
        lam=kernel_cfg.lam,
        num_centers=min(kernel_cfg.num_centers, x.shape[0]) if kernel_cfg.num_centers else None,
        cg_max_iter=kernel_cfg.cg_max_iter,
        cg_tol=kernel_cfg.cg_tol,
        center_seed=stage_seed,
    )
    return fit_classifier(x, y, cfg)


def fit_models_with_mining(
    assembly: TrainingAssembly,
    kernel_cfg: KernelConfig,
    mining_cfg: MiningConfig,
) -> ModelBundle:
    """Per class: seed the hard set with batch one, mine the rest, refit.

    Classes without positives are skipped and recorded. The hard-negative
    set can never exceed n_batches * batch_size members.
    """
    bundle = ModelBundle()
    for c in assembly.classes():
        pos = assembly.pos_features[c]
        if pos.shape[0] == 0:
            bundle.skipped_classes.append(c)
            continue
        batches = assembly.negative_batches.get(c, [])
        nonempty = [b for b in batches if b.shape[0] > 0]
        if not nonempty:
            raise ValueError(f"class {c} has no negatives to train against")
        hard = nonempty[0]
        for stage, batch in enumerate(nonempty[1:], start=1):
            probe = _fit_class(pos, hard, kernel_cfg, stage_seed=_stage_seed(mining_cfg, c, stage))
            scores = predict_raw(probe, batch)
            mined = batch[scores > mining_cfg.hard_score]
            if mined.shape[0]:
                hard = np.vstack([hard, mined])
        final = _fit_class(pos, hard, kernel_cfg, stage_seed=_stage_seed(mining_cfg, c, 0))
        bundle.classifiers[c] = ClassifierModel(
            class_id=c,
            centers=final.centers,
            coefficients=final.coefficients,
            config=final.config,
            cg_residuals=final.cg_residuals,
        )
        bundle.refiners[c] = fit_refiner(
            pos, assembly.pos_deltas[c], lambda_rls=mining_cfg.refiner_lambda, class_id=c
        )
    return bundle


def _stage_seed(cfg: MiningConfig, class_id: int, stage: int) -> int:
    return int(np.random.default_rng([cfg.shuffle_seed, class_id, stage, 47]).integers(2**31))


def retrain_from_store(
    store: DatasetStore,
    kernel_cfg: KernelConfig,
    mining_cfg: MiningConfig,
) -> ModelBundle:
    """Full stage-two retrain over every stored frame, all sources pooled."""
    if len(store) == 0:
        raise ValueError("dataset store is empty")
    assembly = build_assembly(store.frames, mining_cfg)
    return fit_models_with_mining(assembly, kernel_cfg, mining_cfg)
