import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echotrack.errors import EmptyInput, MissingFrame
from echotrack.io import AnnotationSet
from echotrack.metrics import evaluate, note, summarize, te
from echotrack.tracker import Tracklet


class TestTe:
    def test_identity(self):
        assert te((3.0, 4.0), (3.0, 4.0)) == 0.0

    def test_three_four_five(self):
        assert te((0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0)

    def test_axis_aligned(self):
        assert te((1.5, 0.0), (0.0, 0.0)) == pytest.approx(1.5)

    @settings(max_examples=50, deadline=None)
    @given(
        st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
        st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
        st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
    )
    def test_metric_properties(self, a, b, c):
        assert te(a, b) == pytest.approx(te(b, a))
        assert te(a, b) >= 0.0
        assert te(a, c) <= te(a, b) + te(b, c) + 1e-9


class TestNote:
    def test_static_landmark(self):
        assert note((5.0, 5.0), (5.0, 5.0)) == 0.0

    def test_drift(self):
        assert note((0.0, 0.0), (3.0, 4.0)) == pytest.approx(5.0)

    def test_equals_te_of_frozen_prediction(self):
        init = (2.0, 7.0)
        gt = (4.5, -1.0)
        assert note(init, gt) == te(init, gt)


class TestSummarize:
    def test_singleton(self):
        s = summarize([5.0])
        assert (s.mean, s.std, s.p95, s.min, s.max, s.n) == (5.0, 0.0, 5.0, 5.0, 5.0, 1)

    def test_hand_computed(self):
        s = summarize([1.0, 2.0, 3.0, 4.0, 100.0])
        assert s.mean == pytest.approx(22.0)
        assert s.std == pytest.approx(math.sqrt(7610.0 / 4.0))
        assert s.std == pytest.approx(43.62, abs=0.005)
        assert s.p95 == 100.0
        assert s.min == 1.0
        assert s.max == 100.0

    def test_constant(self):
        s = summarize([2.5] * 7)
        assert (s.mean, s.std, s.p95) == (2.5, 0.0, 2.5)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInput):
            summarize([])

    def test_nearest_rank_percentile(self):
        # 20 values: ceil(0.95*20) = 19th order statistic
        values = list(range(1, 21))
        assert summarize(values).p95 == 19

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 1000), min_size=1, max_size=40))
    def test_permutation_invariance(self, values):
        rng = np.random.default_rng(0)
        shuffled = list(values)
        rng.shuffle(shuffled)
        a = summarize(values)
        b = summarize(shuffled)
        assert a.mean == pytest.approx(b.mean, nan_ok=True)
        assert a.p95 == b.p95
        assert a.min == b.min
        assert a.max == b.max
        assert a.n == b.n

    def test_invariants(self):
        s = summarize([3.0, 9.0, 4.0])
        assert s.min <= s.mean <= s.max
        assert s.min <= s.p95 <= s.max


def make_annotations(data):
    ann = AnnotationSet()
    for lid, rows in data.items():
        ann.landmarks[lid] = rows
    return ann


class TestEvaluate:
    def test_perfect_tracker_all_zero(self):
        ann = make_annotations({1: [(0, 5.0, 5.0), (3, 6.0, 7.0)]})
        tr = Tracklet(landmark_id=1)
        tr.points = [(0, 5.0, 5.0), (1, 0.0, 0.0), (2, 0.0, 0.0), (3, 6.0, 7.0)]
        report = evaluate([tr], ann)
        assert report.pooled.mean == 0.0
        assert report.pooled.max == 0.0
        assert report.per_landmark[1].n == 2

    def test_frozen_predictions_match_note_bitwise(self):
        ann = make_annotations(
            {1: [(0, 5.0, 5.0), (2, 7.5, 9.0), (4, 1.0, 2.0)], 2: [(0, 8.0, 8.0), (3, 0.0, 1.0)]}
        )
        tracklets = []
        for lid, rows in ann.landmarks.items():
            init = (rows[0][1], rows[0][2])
            tr = Tracklet(landmark_id=lid)
            tr.points = [(f, init[0], init[1]) for f in range(5)]
            tracklets.append(tr)
        report = evaluate(tracklets, ann)
        assert report.pooled == report.note_pooled

    def test_missing_frame_named(self):
        ann = make_annotations({1: [(0, 5.0, 5.0), (9, 6.0, 6.0)]})
        tr = Tracklet(landmark_id=1)
        tr.points = [(0, 5.0, 5.0), (1, 5.0, 5.0)]
        with pytest.raises(MissingFrame, match="frame 10"):
            evaluate([tr], ann)

    def test_missing_landmark(self):
        ann = make_annotations({7: [(0, 1.0, 1.0)]})
        with pytest.raises(MissingFrame, match="landmark 7"):
            evaluate([], ann)

    def test_pooled_concatenates_landmarks(self):
        ann = make_annotations({1: [(0, 0.0, 0.0), (1, 3.0, 4.0)], 2: [(0, 0.0, 0.0)]})
        tr1 = Tracklet(landmark_id=1)
        tr1.points = [(0, 0.0, 0.0), (1, 0.0, 0.0)]
        tr2 = Tracklet(landmark_id=2)
        tr2.points = [(0, 0.0, 0.0)]
        report = evaluate([tr1, tr2], ann)
        assert report.pooled.n == 3
        assert report.pooled.max == pytest.approx(5.0)
