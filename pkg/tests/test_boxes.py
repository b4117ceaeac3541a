import math

import numpy as np
import pytest

from refinery.boxes import (
    BoundingBox,
    BoxDelta,
    Detection,
    apply_deltas,
    clip_box,
    encode_deltas,
    iou,
    nms,
    pairwise_iou,
)


def random_box(rng, span=100.0):
    return BoundingBox(
        x=rng.uniform(-span, span),
        y=rng.uniform(-span, span),
        w=rng.uniform(0.5, span),
        h=rng.uniform(0.5, span),
    )


class TestBoundingBox:
    def test_rejects_nonpositive_size(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 10)
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 10, -1)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            BoundingBox(float("nan"), 0, 1, 1)
        with pytest.raises(ValueError):
            BoundingBox(0, 0, float("inf"), 1)

    def test_detection_score_range(self):
        with pytest.raises(ValueError):
            Detection(BoundingBox(0, 0, 1, 1), 0, 1.5)


class TestIou:
    def test_identity(self):
        a = BoundingBox(3, 4, 10, 12)
        assert iou(a, a) == 1.0

    def test_disjoint(self):
        assert iou(BoundingBox(0, 0, 10, 10), BoundingBox(20, 20, 5, 5)) == 0.0

    def test_half_shift(self):
        # overlap 5x10 = 50, union 100 + 100 - 50 = 150
        a = BoundingBox(0, 0, 10, 10)
        b = BoundingBox(5, 0, 10, 10)
        assert iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            v = iou(a, b)
            assert v == pytest.approx(iou(b, a), abs=1e-12)
            assert 0.0 <= v <= 1.0 + 1e-12

    def test_one_iff_equal(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a, b = random_box(rng), random_box(rng)
            if iou(a, b) == 1.0:
                assert (a.x, a.y, a.w, a.h) == (b.x, b.y, b.w, b.h)

    def test_pairwise_matches_scalar(self):
        rng = np.random.default_rng(9)
        boxes_a = [random_box(rng) for _ in range(12)]
        boxes_b = [random_box(rng) for _ in range(9)]
        mat = pairwise_iou(
            np.array([[b.x, b.y, b.w, b.h] for b in boxes_a]),
            np.array([[b.x, b.y, b.w, b.h] for b in boxes_b]),
        )
        for i, a in enumerate(boxes_a):
            for j, b in enumerate(boxes_b):
                assert mat[i, j] == pytest.approx(iou(a, b), abs=1e-12)


class TestNms:
    def test_singleton(self):
        d = Detection(BoundingBox(0, 0, 5, 5), 1, 0.7)
        assert nms([d], 0.3) == [d]

    def test_identical_boxes_same_class(self):
        box = BoundingBox(0, 0, 10, 10)
        hi = Detection(box, 0, 0.9)
        lo = Detection(box, 0, 0.8)
        assert nms([lo, hi], 0.3) == [hi]

    def test_identical_boxes_different_class(self):
        box = BoundingBox(0, 0, 10, 10)
        a = Detection(box, 0, 0.9)
        b = Detection(box, 1, 0.8)
        assert nms([a, b], 0.3) == [a, b]

    def test_empty(self):
        assert nms([], 0.5) == []

    def test_subset_and_separation(self):
        rng = np.random.default_rng(11)
        dets = [
            Detection(random_box(rng, span=30.0), int(rng.integers(0, 3)), float(rng.uniform(0, 1)))
            for _ in range(60)
        ]
        kept = nms(dets, 0.4)
        assert all(k in dets for k in kept)
        for i, a in enumerate(kept):
            for b in kept[i + 1 :]:
                if a.class_id == b.class_id:
                    assert iou(a.box, b.box) <= 0.4
        scores = [k.score for k in kept]
        assert scores == sorted(scores, reverse=True)


class TestDeltas:
    def test_zero_delta(self):
        p = BoundingBox(2, 3, 7, 9)
        d = encode_deltas(p, p)
        assert (d.dx, d.dy, d.dw, d.dh) == (0.0, 0.0, 0.0, 0.0)
        assert apply_deltas(p, BoxDelta(0, 0, 0, 0)) == p

    def test_closed_form_encode(self):
        p = BoundingBox(5, 5, 10, 10)    # center (10, 10)
        t = BoundingBox(2, 5, 20, 10)    # center (12, 10)
        d = encode_deltas(p, t)
        assert d.dx == pytest.approx(0.2, abs=1e-12)
        assert d.dy == pytest.approx(0.0, abs=1e-12)
        assert d.dw == pytest.approx(math.log(2.0), abs=1e-12)
        assert d.dh == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_decode(self):
        p = BoundingBox(5, 5, 10, 10)
        out = apply_deltas(p, BoxDelta(0.2, 0.0, math.log(2.0), 0.0))
        assert out.center == pytest.approx((12.0, 10.0), abs=1e-9)
        assert (out.w, out.h) == pytest.approx((20.0, 10.0), abs=1e-9)

    def test_round_trip_identity(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            p, t = random_box(rng), random_box(rng)
            got = apply_deltas(p, encode_deltas(p, t))
            assert got.x == pytest.approx(t.x, abs=1e-9)
            assert got.y == pytest.approx(t.y, abs=1e-9)
            assert got.w == pytest.approx(t.w, abs=1e-9)
            assert got.h == pytest.approx(t.h, abs=1e-9)


class TestClipBox:
    def test_interior_unchanged(self):
        b = BoundingBox(10, 10, 20, 20)
        assert clip_box(b, 100, 100) == b

    def test_partial_clip(self):
        assert clip_box(BoundingBox(-5, 0, 10, 10), 100, 100) == BoundingBox(0, 0, 5, 10)

    def test_fully_outside_degenerates(self):
        far = clip_box(BoundingBox(500, 700, 10, 10), 100, 100)
        assert far == BoundingBox(99, 99, 1, 1)
        neg = clip_box(BoundingBox(-50, -70, 10, 10), 100, 100)
        assert neg == BoundingBox(0, 0, 1, 1)

    def test_result_always_inside(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            b = clip_box(random_box(rng, span=250.0), 100, 80)
            assert b.x >= 0 and b.y >= 0
            assert b.x2 <= 100 and b.y2 <= 80
