import numpy as np
import pytest

from refinery.boxes import BoundingBox, Detection
from refinery.policy import DecisionKind, FrameDecision, SelectionThresholds, frame_score, select

TH = SelectionThresholds(low=0.3, high=0.4, min_score=0.1)


def dets_from_scores(scores):
    return [
        Detection(BoundingBox(20.0 * i, 0, 10, 10), 0, float(s))
        for i, s in enumerate(scores)
    ]


class TestFrameScore:
    def test_mean(self):
        assert frame_score(dets_from_scores([0.9, 0.3])) == pytest.approx(0.6)

    def test_empty_is_zero(self):
        assert frame_score([]) == 0.0

    def test_single(self):
        assert frame_score(dets_from_scores([0.42])) == pytest.approx(0.42)


class TestSelect:
    def test_confident_frame_self_labeled(self):
        d = select(dets_from_scores([0.9, 0.8]), TH)
        assert d.kind == DecisionKind.SELF_LABEL
        assert d.frame_score == pytest.approx(0.85)

    def test_low_mean_queried(self):
        d = select(dets_from_scores([0.2, 0.25]), TH)
        assert d.kind == DecisionKind.QUERY_HUMAN

    def test_min_score_override(self):
        # mean 0.5 clears the high threshold, yet one weak box forces a query
        d = select(dets_from_scores([0.95, 0.05]), TH)
        assert d.kind == DecisionKind.QUERY_HUMAN

    def test_dead_band_discarded(self):
        d = select(dets_from_scores([0.35]), TH)
        assert d.kind == DecisionKind.DISCARD

    def test_empty_frame_queried(self):
        d = select([], TH)
        assert d.kind == DecisionKind.QUERY_HUMAN
        assert d.frame_score == 0.0

    def test_boundary_ties_fall_to_dead_band(self):
        assert select(dets_from_scores([0.3]), TH).kind == DecisionKind.DISCARD
        assert select(dets_from_scores([0.4]), TH).kind == DecisionKind.DISCARD

    def test_exhaustive_and_consistent(self):
        rng = np.random.default_rng(2024)
        for _ in range(2000):
            n = int(rng.integers(0, 7))
            scores = [float(rng.random()) for _ in range(n)]
            d = select(dets_from_scores(scores), TH)
            assert isinstance(d, FrameDecision)
            if d.kind == DecisionKind.SELF_LABEL:
                assert min(scores) >= TH.min_score
                assert frame_score(dets_from_scores(scores)) > TH.high
            elif d.kind == DecisionKind.QUERY_HUMAN:
                assert (
                    not scores
                    or min(scores) < TH.min_score
                    or frame_score(dets_from_scores(scores)) < TH.low
                )

    def test_monotone_rank_under_score_increase(self):
        rng = np.random.default_rng(31337)
        for _ in range(2000):
            n = int(rng.integers(1, 6))
            scores = rng.random(n)
            bumped = np.clip(scores + rng.random(n) * (1.0 - scores), 0.0, 1.0)
            before = select(dets_from_scores(scores), TH)
            after = select(dets_from_scores(bumped), TH)
            assert after.kind.rank >= before.kind.rank


def test_threshold_validation():
    with pytest.raises(ValueError):
        SelectionThresholds(low=0.5, high=0.4, min_score=0.1)
    with pytest.raises(ValueError):
        SelectionThresholds(low=0.3, high=0.4, min_score=0.35)
