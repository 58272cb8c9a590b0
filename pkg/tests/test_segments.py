"""Segment-extraction tests: smoothing arithmetic, run/merge/drop rules,
and the extraction round-trip property."""

import numpy as np
import pytest

from ortwin.model import frame_labels
from ortwin.segments import DetectionSegment, ExtractionConfig, extract_segments, smooth
from ortwin.trial import EventSegment

BASIC = ExtractionConfig(threshold=0.5, smooth_width=1, merge_gap=0, min_len=1)


def probs_from(frames_by_class, n_frames, n_classes=1, p=0.9):
    out = np.zeros((n_frames, n_classes))
    for c, frames in frames_by_class.items():
        for f in frames:
            out[f, c] = p
    return out


def covered(segs):
    return sum(s.end_s - s.start_s for s in segs)


# -- smoothing -------------------------------------------------------------------


def test_smooth_w1_identity():
    x = np.random.default_rng(0).uniform(size=(7, 3))
    assert np.array_equal(smooth(x, 1), x)


def test_smooth_constant_unchanged():
    x = np.full((9, 2), 0.4)
    assert np.allclose(smooth(x, 3), 0.4, atol=1e-15)


def test_smooth_impulse_edge_renormalized():
    got = smooth(np.array([[0.0], [1.0], [0.0]]), 3)
    assert np.allclose(got[:, 0], [0.5, 1.0 / 3.0, 0.5], atol=1e-12)


def test_smooth_even_width_rejected():
    with pytest.raises(ValueError):
        smooth(np.zeros((4, 1)), 2)


# -- extraction ------------------------------------------------------------------


def test_all_below_threshold_empty():
    assert extract_segments(np.full((10, 5), 0.49), BASIC, fps=1.0) == []


def test_two_runs_no_merge():
    probs = probs_from({0: [2, 3, 5, 6]}, 10)
    segs = extract_segments(probs, BASIC, fps=1.0)
    assert [(s.start_s, s.end_s) for s in segs] == [(2.0, 4.0), (5.0, 7.0)]
    assert all(abs(s.score - 0.9) < 1e-12 for s in segs)
    assert all(s.class_id == 0 for s in segs)


def test_gap_merge():
    probs = probs_from({0: [2, 3, 5, 6]}, 10)
    cfg = ExtractionConfig(threshold=0.5, smooth_width=1, merge_gap=1, min_len=1)
    segs = extract_segments(probs, cfg, fps=1.0)
    assert [(s.start_s, s.end_s) for s in segs] == [(2.0, 7.0)]
    assert abs(segs[0].score - 0.9) < 1e-12


def test_score_excludes_bridged_gap_frames():
    probs = probs_from({0: [2, 3, 5, 6]}, 10)
    probs[4, 0] = 0.3  # below threshold, bridged by the merge
    cfg = ExtractionConfig(threshold=0.5, smooth_width=1, merge_gap=1, min_len=1)
    (seg,) = extract_segments(probs, cfg, fps=1.0)
    assert (seg.start_s, seg.end_s) == (2.0, 7.0)
    assert abs(seg.score - 0.9) < 1e-12  # the 0.3 frame does not dilute


def test_min_len_drops_short_runs():
    probs = probs_from({0: [1, 4, 5, 6]}, 10)
    cfg = ExtractionConfig(threshold=0.5, smooth_width=1, merge_gap=0, min_len=3)
    segs = extract_segments(probs, cfg, fps=1.0)
    assert [(s.start_s, s.end_s) for s in segs] == [(4.0, 7.0)]


def test_fps_scales_boundaries():
    probs = probs_from({0: [2, 3]}, 6)
    (seg,) = extract_segments(probs, BASIC, fps=2.0)
    assert (seg.start_s, seg.end_s) == (1.0, 2.0)


def test_trial_id_attached():
    probs = probs_from({0: [2, 3]}, 6)
    (seg,) = extract_segments(probs, BASIC, fps=1.0, trial_id=17)
    assert seg.trial_id == 17


def test_per_class_sorted_disjoint():
    rng = np.random.default_rng(7)
    probs = rng.uniform(size=(60, 5))
    segs = extract_segments(probs, ExtractionConfig(), fps=1.0)
    for c in range(5):
        mine = [s for s in segs if s.class_id == c]
        for a, b in zip(mine, mine[1:]):
            assert a.start_s < b.start_s
            assert a.end_s <= b.start_s


def test_threshold_monotonicity():
    rng = np.random.default_rng(11)
    probs = rng.uniform(size=(80, 3))
    prev = None
    for theta in (0.2, 0.35, 0.5, 0.65, 0.8):
        cfg = ExtractionConfig(threshold=theta, smooth_width=3, merge_gap=1, min_len=1)
        total = covered(extract_segments(probs, cfg, fps=1.0))
        if prev is not None:
            assert total <= prev + 1e-12
        prev = total


def test_round_trip_hard_labels():
    rng = np.random.default_rng(3)
    hard = (rng.uniform(size=(50, 5)) < 0.3).astype(np.float64)
    segs = extract_segments(hard, BASIC, fps=1.0)
    events = [EventSegment(s.class_id, s.start_s, s.end_s) for s in segs]
    rebuilt = frame_labels(events, fps=1.0, n_frames=50)
    assert np.array_equal(rebuilt, hard)


def test_segment_order_validated():
    with pytest.raises(ValueError):
        DetectionSegment(0, 5.0, 5.0, 0.5, trial_id=0)


def test_extraction_config_validated():
    with pytest.raises(ValueError):
        ExtractionConfig(threshold=0.0)
    with pytest.raises(ValueError):
        ExtractionConfig(smooth_width=4)
    with pytest.raises(ValueError):
        ExtractionConfig(merge_gap=-1)
    with pytest.raises(ValueError):
        ExtractionConfig(min_len=0)


def test_inputs_validated():
    with pytest.raises(ValueError):
        extract_segments(np.zeros((4, 5)), BASIC, fps=0.0)
    with pytest.raises(ValueError):
        extract_segments(np.full((4, 5), 1.5), BASIC, fps=1.0)
    with pytest.raises(ValueError):
        extract_segments(np.zeros(4), BASIC, fps=1.0)
