import numpy as np
import pytest

from refinery.boxes import BoundingBox, LabeledBox
from refinery.frontend import OracleJitterSource
from refinery.tracking import TrackerConfig, init_tracks, quality_gate
from refinery.world import FrameRecord


def frame_with_gt(frame_id, labeled_boxes, frame_w=200, frame_h=150, per_gt=4):
    src = OracleJitterSource(jitter_sigma=0.0, per_gt=per_gt, seed=1)
    frame = FrameRecord(
        frame_id=frame_id,
        ground_truth=labeled_boxes,
        proposals=[],
        frame_w=frame_w,
        frame_h=frame_h,
    )
    proposals = src.propose(frame)
    return FrameRecord(
        frame_id=frame_id,
        ground_truth=labeled_boxes,
        proposals=proposals,
        frame_w=frame_w,
        frame_h=frame_h,
    )


class TestInitTracks:
    def test_one_track_per_annotation(self):
        anns = [
            LabeledBox(BoundingBox(10, 10, 20, 20), 0),
            LabeledBox(BoundingBox(60, 10, 20, 20), 1),
            LabeledBox(BoundingBox(10, 70, 20, 20), 2),
        ]
        tracks = init_tracks(anns)
        assert len(tracks.tracks) == 3
        assert all(t.age == 0 and t.healthy for t in tracks.tracks)
        assert all(t.velocity == (0.0, 0.0) for t in tracks.tracks)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            init_tracks([])

    def test_reinit_discards_state(self):
        anns = [LabeledBox(BoundingBox(10, 10, 20, 20), 0)]
        tracks = init_tracks(anns)
        tracks.propagate(frame_with_gt(0, anns))
        fresh = init_tracks(anns)
        assert fresh.tracks[0].age == 0


class TestPropagate:
    def test_static_scene_fixed_point(self):
        anns = [
            LabeledBox(BoundingBox(10, 10, 20, 20), 0),
            LabeledBox(BoundingBox(60, 40, 24, 18), 1),
        ]
        tracks = init_tracks(anns)
        for fid in range(6):
            labels = tracks.propagate(frame_with_gt(fid, anns))
            assert labels == anns

    def test_translating_scene_converges(self):
        base = BoundingBox(10, 10, 30, 30)
        tracks = init_tracks([LabeledBox(base, 0)])
        for fid in range(1, 8):
            moved = LabeledBox(BoundingBox(base.x + 2.0 * fid, base.y, base.w, base.h), 0)
            labels = tracks.propagate(frame_with_gt(fid, [moved]))
            if fid >= 3:
                got_cx = labels[0].box.center[0]
                want_cx = moved.box.center[0]
                assert abs(got_cx - want_cx) <= 1.0

    def test_coast_until_unhealthy(self):
        cfg = TrackerConfig(max_coast=3)
        tracks = init_tracks([LabeledBox(BoundingBox(10, 10, 20, 20), 0)], cfg)
        empty_frames = [
            FrameRecord(
                frame_id=i,
                ground_truth=[],
                proposals=[(BoundingBox(150, 120, 10, 10), np.zeros(2))],
                frame_w=200,
                frame_h=150,
            )
            for i in range(4)
        ]
        health = []
        for fr in empty_frames:
            tracks.propagate(fr)
            health.append(tracks.tracks[0].healthy)
        assert health == [True, True, False, False]

    def test_one_label_per_live_track(self):
        anns = [
            LabeledBox(BoundingBox(10, 10, 20, 20), 0),
            LabeledBox(BoundingBox(100, 100, 20, 20), 1),
        ]
        tracks = init_tracks(anns)
        labels = tracks.propagate(frame_with_gt(0, anns[:1]))  # only class 0 visible
        assert len(labels) == 2

    def test_empty_track_set_rejected(self):
        anns = [LabeledBox(BoundingBox(10, 10, 20, 20), 0)]
        tracks = init_tracks(anns)
        tracks.tracks = []
        with pytest.raises(ValueError):
            tracks.propagate(frame_with_gt(0, anns))


class TestQualityGate:
    def test_disjoint_ok(self):
        labels = [
            LabeledBox(BoundingBox(0, 0, 10, 10), 0),
            LabeledBox(BoundingBox(50, 50, 10, 10), 1),
        ]
        assert quality_gate(labels) == "ok"

    def test_heavy_overlap_low(self):
        # IoU = 60*100 / (100*100*2 - 6000) = 6000/14000 ~ 0.43 ... build > 0.5:
        a = BoundingBox(0, 0, 100, 100)
        b = BoundingBox(20, 0, 100, 100)  # inter 8000, union 12000 -> 0.667
        labels = [LabeledBox(a, 0), LabeledBox(b, 1)]
        assert quality_gate(labels, TrackerConfig(overlap_gate=0.5)) == "low"

    def test_single_track_ok(self):
        assert quality_gate([LabeledBox(BoundingBox(0, 0, 5, 5), 0)]) == "ok"

    def test_unhealthy_forces_low(self):
        labels = [LabeledBox(BoundingBox(0, 0, 5, 5), 0)]
        assert quality_gate(labels, any_unhealthy=True) == "low"

    def test_gate_ok_implies_bounded_overlaps(self):
        rng = np.random.default_rng(3)
        cfg = TrackerConfig(overlap_gate=0.5)
        for _ in range(100):
            labels = [
                LabeledBox(
                    BoundingBox(float(rng.uniform(0, 80)), float(rng.uniform(0, 80)),
                                float(rng.uniform(5, 40)), float(rng.uniform(5, 40))),
                    i,
                )
                for i in range(3)
            ]
            if quality_gate(labels, cfg) == "ok":
                from refinery.boxes import iou

                for i, a in enumerate(labels):
                    for b in labels[i + 1 :]:
                        assert iou(a.box, b.box) <= cfg.overlap_gate
