"""Localization-metric tests: tIoU suite, matcher rules, AP fixed cases,
a brute-force AP oracle over random instances, and boundary-error stats."""

import numpy as np
import pytest

from ortwin.metrics import (
    GtSegment,
    average_map,
    average_precision,
    boundary_errors,
    format_percent,
    map_at,
    match_detections,
    tiou,
)
from ortwin.segments import DetectionSegment


def det(start, end, score, trial=0, cls=0):
    return DetectionSegment(cls, float(start), float(end), float(score), trial_id=trial)


def gt(start, end, trial=0, cls=0):
    return GtSegment(trial, cls, float(start), float(end))


# -- tIoU ------------------------------------------------------------------------


def test_tiou_fixed_cases():
    assert tiou((0, 10), (0, 10)) == 1.0
    assert tiou((0, 10), (20, 30)) == 0.0
    assert abs(tiou((0, 10), (5, 15)) - 5.0 / 15.0) < 1e-12
    assert tiou((0, 10), (10, 20)) == 0.0  # touching intervals share no time


def test_tiou_properties():
    rng = np.random.default_rng(5)
    for _ in range(300):
        a = tuple(sorted(rng.uniform(0, 100, 2)))
        b = tuple(sorted(rng.uniform(0, 100, 2)))
        t = tiou(a, b)
        assert 0.0 <= t <= 1.0
        assert t == tiou(b, a)
        assert tiou(a, a) == 1.0


def test_tiou_invalid_interval():
    with pytest.raises(ValueError):
        tiou((5, 2), (0, 1))


# -- matching --------------------------------------------------------------------


def test_match_exact_tp():
    assert match_detections([det(10, 20, 0.9)], [gt(10, 20)], 0.5) == [True]


def test_match_two_dets_one_gt():
    labels = match_detections([det(10, 20, 0.9), det(10, 20, 0.8)], [gt(10, 20)], 0.5)
    assert labels == [True, False]


def test_match_wrong_trial_fp():
    assert match_detections([det(10, 20, 0.9, trial=1)], [gt(10, 20, trial=0)], 0.5) == [False]


def test_match_prefers_highest_tiou():
    dets = [det(10, 20, 0.9)]
    gts = [gt(0, 11), gt(9, 21)]
    labels = match_detections(dets, gts, 0.3)
    assert labels == [True]
    # the closer gt must be the one consumed: a second identical det
    # can then only reach the far gt, below threshold at 0.3
    labels2 = match_detections([det(10, 20, 0.9), det(10, 20, 0.8)], gts, 0.3)
    assert labels2 == [True, False]


# -- average precision -------------------------------------------------------------


def test_ap_single_exact():
    res = average_precision([det(5, 9, 0.7)], [gt(5, 9)], 0.5)
    assert res.ap == 1.0 and res.n_tp == 1 and res.n_fp == 0 and res.n_gt == 1


def test_ap_late_fp_does_not_lower():
    # det A matches (tIoU .6), det B misses entirely; envelope keeps AP 1.0
    a = det(0, 10, 0.9)
    b = det(50, 60, 0.8)
    res = average_precision([a, b], [gt(0, 8)], 0.5)
    assert abs(tiou((0, 10), (0, 8)) - 0.8) < 1e-12
    assert res.ap == 1.0


def test_ap_tp_fp_tp_pattern():
    gts = [gt(0, 10), gt(20, 30)]
    dets = [det(0, 10, 0.9), det(50, 60, 0.8), det(20, 30, 0.7)]
    res = average_precision(dets, gts, 0.5)
    assert abs(res.ap - 5.0 / 6.0) < 1e-12  # 0.5*1 + 0.5*(2/3)
    assert res.n_tp == 2 and res.n_fp == 1


def test_ap_no_gt_returns_none():
    assert average_precision([det(0, 1, 0.5)], [], 0.5) is None


def test_ap_no_dets_zero():
    res = average_precision([], [gt(0, 10)], 0.5)
    assert res.ap == 0.0 and res.n_gt == 1


def test_ap_multi_class_rejected():
    with pytest.raises(ValueError):
        average_precision([det(0, 1, 0.5, cls=0)], [gt(0, 1, cls=1)], 0.5)


def test_ap_score_scaling_invariance():
    rng = np.random.default_rng(8)
    gts = [gt(i * 20, i * 20 + 10, trial=i % 2) for i in range(4)]
    dets = []
    for _ in range(8):
        s = rng.uniform(0, 70)
        dets.append(
            det(s, s + rng.uniform(5, 15), rng.uniform(0.1, 0.9), trial=int(rng.integers(2)))
        )
    base = average_precision(dets, gts, 0.3).ap
    scaled = [
        DetectionSegment(0, d.start_s, d.end_s, d.score * 0.5, d.trial_id) for d in dets
    ]
    assert abs(average_precision(scaled, gts, 0.3).ap - base) < 1e-15


# -- brute-force oracle -------------------------------------------------------------


def _oracle_ap(dets, gts, thr):
    """AP recomputed from first principles: label each detection by walking
    the score order and greedily claiming best-tIoU ground truth, then
    integrate precision over recall with an explicitly maximized envelope."""
    order = sorted(dets, key=lambda d: (-d.score, d.start_s, d.trial_id))
    gt_sorted = sorted(gts, key=lambda g: (g.trial_id, g.start_s, g.end_s))
    claimed = set()
    labels = []
    for d in order:
        cands = []
        for j, g in enumerate(gt_sorted):
            if j in claimed or g.trial_id != d.trial_id:
                continue
            inter = min(d.end_s, g.end_s) - max(d.start_s, g.start_s)
            union = max(d.end_s, g.end_s) - min(d.start_s, g.start_s)
            t = inter / union if inter > 0 else 0.0
            cands.append((t, -j))  # ties keep the earliest candidate
        best = max(cands) if cands else (0.0, 1)
        if best[1] <= 0 and best[0] >= thr:
            claimed.add(-best[1])
            labels.append(1)
        else:
            labels.append(0)
    # PR points at every prefix of the ranked list
    points = []
    tp = fp = 0
    for lab in labels:
        tp += lab
        fp += 1 - lab
        points.append((tp / len(gts), tp / (tp + fp)))
    ap = 0.0
    prev_r = 0.0
    for r, _ in points:
        if r == prev_r:
            continue
        best_p = max(p for rr, p in points if rr >= r)
        ap += (r - prev_r) * best_p
        prev_r = r
    return ap


def test_ap_matches_brute_force_oracle():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 1000:
        n_gt = int(rng.integers(1, 5))
        n_det = int(rng.integers(0, 9))
        n_trials = int(rng.integers(1, 3))
        gts = []
        for _ in range(n_gt):
            s = rng.uniform(0, 80)
            gts.append(gt(s, s + rng.uniform(2, 30), trial=int(rng.integers(n_trials))))
        dets = []
        for _ in range(n_det):
            s = rng.uniform(0, 80)
            dets.append(
                det(s, s + rng.uniform(2, 30), rng.uniform(0.01, 0.99),
                    trial=int(rng.integers(n_trials)))
            )
        thr = float(rng.choice([0.1, 0.25, 0.5, 0.75]))
        res = average_precision(dets, gts, thr)
        assert abs(res.ap - _oracle_ap(dets, gts, thr)) <= 1e-9
        checked += 1


# -- mAP and reporting ---------------------------------------------------------------


def test_map_perfect_predictions():
    gts, dets = [], []
    for trial in range(3):
        for c in range(5):
            s = 10.0 * (c + 1) + trial
            gts.append(gt(s, s + 8, trial=trial, cls=c))
            dets.append(det(s, s + 8, 0.9, trial=trial, cls=c))
    rep = map_at(dets, gts)
    assert all(format_percent(m) == "100.00" for m in rep.map_per_threshold.values())
    assert format_percent(rep.avg_map) == "100.00"
    for stats in rep.boundary.values():
        assert stats.start_mean_s == 0.0 and stats.end_mean_s == 0.0
        assert stats.start_std_s == 0.0 and stats.end_std_s == 0.0
        assert stats.missed == 0


def test_map_excludes_classes_without_gt():
    gts = [gt(0, 10, cls=0)]
    dets = [det(0, 10, 0.9, cls=0), det(5, 9, 0.8, cls=3)]
    rep = map_at(dets, gts)
    assert rep.excluded_classes == (1, 2, 3, 4)
    assert rep.map_per_threshold[0.25] == 1.0


def test_map_avg_is_threshold_mean():
    gts = [gt(0, 10, cls=0)]
    dets = [det(0, 6, 0.9, cls=0)]  # tIoU 0.6: hit at 0.25/0.5, miss at 0.75
    rep = map_at(dets, gts)
    expect = np.mean([rep.map_per_threshold[t] for t in rep.thresholds])
    assert abs(rep.avg_map - expect) < 1e-12


def test_map_class_id_range_checked():
    with pytest.raises(ValueError):
        map_at([det(0, 1, 0.5, cls=7)], [gt(0, 1)])
    with pytest.raises(ValueError):
        map_at([], [gt(0, 1, cls=-1)])


def test_average_map_reporting_matches_published_rows():
    a = average_map({0.25: 0.9352, 0.50: 0.7564, 0.75: 0.4309})
    assert format_percent(a) == "70.75"
    b = average_map({0.25: 0.9244, 0.50: 0.7946, 0.75: 0.4689})
    assert format_percent(b) == "72.93"
    with pytest.raises(ValueError):
        average_map({})


# -- boundary errors ----------------------------------------------------------------


def test_boundary_exact_zero():
    stats = boundary_errors([det(10, 20, 0.9)], [gt(10, 20)])[0]
    assert stats.start_mean_s == 0.0 and stats.end_mean_s == 0.0
    assert stats.matched == 1 and stats.missed == 0


def test_boundary_fixed_case():
    stats = boundary_errors([det(12, 19, 0.9)], [gt(10, 20)])[0]
    assert abs(stats.start_mean_s - 2.0) < 1e-12
    assert abs(stats.end_mean_s - 1.0) < 1e-12
    assert stats.start_std_s == 0.0  # single match: sample std defined as 0


def test_boundary_miss_counted_not_averaged():
    dets = [det(10, 20, 0.9), det(100, 110, 0.8)]
    gts = [gt(10, 20), gt(50, 60)]
    stats = boundary_errors(dets, gts)[0]
    assert stats.matched == 1 and stats.missed == 1
    assert stats.start_mean_s == 0.0


def test_boundary_sample_std():
    dets = [det(11, 20, 0.9), det(53, 60, 0.8)]
    gts = [gt(10, 20), gt(50, 60)]
    stats = boundary_errors(dets, gts)[0]
    errs = np.array([1.0, 3.0])
    assert abs(stats.start_mean_s - errs.mean()) < 1e-12
    assert abs(stats.start_std_s - errs.std(ddof=1)) < 1e-12


def test_boundary_detection_used_once():
    # one detection cannot serve both ground truths; earlier-start GT wins
    dets = [det(10, 20, 0.9)]
    gts = [gt(10, 20), gt(12, 22)]
    stats = boundary_errors(dets, gts)[0]
    assert stats.matched == 1 and stats.missed == 1
    assert stats.start_mean_s == 0.0  # matched the first (identical) gt


def test_format_percent():
    assert format_percent(0.7075) == "70.75"
    assert format_percent(1.0) == "100.00"
    assert format_percent(0.0) == "0.00"
