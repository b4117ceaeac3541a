import pytest

from refinery.boxes import iou
from refinery.inference import InferenceConfig, detect, write_detections_jsonl
from refinery.kernels import KernelConfig
from refinery.training import DatasetStore, MiningConfig, ModelBundle, retrain_from_store
from refinery.world import (
    WorldConfig,
    generate_scene,
    make_exploration_sequence,
    make_trajectory,
)


@pytest.fixture(scope="module")
def trained():
    cfg = WorldConfig(
        num_classes=3, objects_per_scene=3, feature_dim=16, noise_sigma=0.0,
        proposals_per_frame=36, frame_w=160, frame_h=120, seed=21,
    )
    scene = generate_scene(cfg, 0)
    seq = make_exploration_sequence(scene, make_trajectory(cfg, 25, 0), 0.0, cfg, seq_seed=0)
    store = DatasetStore(cfg.frame_w, cfg.frame_h)
    for fr in seq.frames:
        store.add_frame("train", fr, fr.ground_truth, "auto_depth")
    bundle = retrain_from_store(
        store, KernelConfig(lam=1e-3), MiningConfig(n_batches=2, batch_size=500)
    )
    return cfg, scene, seq, bundle


class TestDetect:
    def test_every_gt_matched_on_training_domain(self, trained):
        _cfg, _scene, seq, bundle = trained
        frame = seq.frames[0]
        dets = detect(frame, bundle)
        for lb in frame.ground_truth:
            best = max(
                (iou(d.box, lb.box) for d in dets if d.class_id == lb.class_id),
                default=0.0,
            )
            assert best >= 0.5

    def test_sorted_and_capped(self, trained):
        _cfg, _scene, seq, bundle = trained
        cfg = InferenceConfig(top_k=3)
        dets = detect(seq.frames[1], bundle, cfg=cfg)
        assert len(dets) <= 3
        scores = [d.score for d in dets]
        assert scores == sorted(scores, reverse=True)

    def test_deterministic(self, trained):
        _cfg, _scene, seq, bundle = trained
        a = detect(seq.frames[2], bundle)
        b = detect(seq.frames[2], bundle)
        assert a == b

    def test_boxes_inside_frame(self, trained):
        cfg, _scene, seq, bundle = trained
        for frame in seq.frames[:5]:
            for d in detect(frame, bundle):
                assert d.box.x >= 0 and d.box.y >= 0
                assert d.box.x2 <= cfg.frame_w and d.box.y2 <= cfg.frame_h

    def test_score_min_monotone(self, trained):
        # lowering score_min never drops a detection (before top_k capping)
        _cfg, _scene, seq, bundle = trained
        frame = seq.frames[3]
        strict = detect(frame, bundle, cfg=InferenceConfig(score_min=0.3, top_k=10_000))
        loose = detect(frame, bundle, cfg=InferenceConfig(score_min=0.05, top_k=10_000))
        for d in strict:
            assert d in loose

    def test_unknown_domain_scores_low(self, trained):
        # a frame whose features moved far from every prototype must not
        # produce confident detections
        cfg, scene, _seq, bundle = trained
        shifted = make_exploration_sequence(
            scene, make_trajectory(cfg, 1, 5), 40.0, cfg, seq_seed=77
        )
        dets = detect(shifted.frames[0], bundle)
        assert all(d.score < 0.15 for d in dets)

    def test_no_models_rejected(self, trained):
        _cfg, _scene, seq, _bundle = trained
        with pytest.raises(ValueError):
            detect(seq.frames[0], ModelBundle())

    def test_empty_scores_empty_result(self, trained):
        _cfg, _scene, seq, bundle = trained
        cfg = InferenceConfig(score_min=0.999)
        assert detect(seq.frames[0], bundle, cfg=cfg) == []

    def test_frame_without_proposals_warns_and_returns_empty(self, trained, caplog):
        import logging

        from refinery.world import FrameRecord

        _cfg, _scene, _seq, bundle = trained
        bare = FrameRecord(frame_id=71, ground_truth=[], proposals=[], frame_w=160, frame_h=120)
        with caplog.at_level(logging.WARNING, logger="refinery.inference"):
            assert detect(bare, bundle) == []
        assert any("no proposals" in r.message for r in caplog.records)


def test_write_detections_jsonl(tmp_path, trained):
    import json

    _cfg, _scene, seq, bundle = trained
    dets = {f.frame_id: detect(f, bundle) for f in seq.frames[:2]}
    path = tmp_path / "dets.jsonl"
    write_detections_jsonl(dets, path)
    lines = [json.loads(l) for l in path.read_text().splitlines()]
    assert len(lines) == sum(len(v) for v in dets.values())
    assert all({"frame_id", "class", "score", "box"} <= set(l) for l in lines)


def test_inference_config_validation():
    with pytest.raises(ValueError):
        InferenceConfig(score_min=1.0)
    with pytest.raises(ValueError):
        InferenceConfig(nms_iou=0.0)
