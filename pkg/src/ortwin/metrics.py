"""Temporal-action-localization scoring.

Detections are matched to ground-truth segments per class by temporal IoU.
Per class we compute average precision at each tIoU threshold (monotone
precision envelope, step integration over distinct recall points), then
mAP per threshold over classes that have ground truth, and the average of
those mAPs. Boundary statistics report |predicted - true| start and end
times per class, matched greedily by tIoU per ground-truth segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ortwin.segments import DetectionSegment
from ortwin.vocab import N_EVENT_CLASSES


@dataclass(frozen=True)
class GtSegment:
    trial_id: int
    class_id: int
    start_s: float
    end_s: float


@dataclass(frozen=True)
class APResult:
    class_id: int
    threshold: float
    ap: float
    n_gt: int
    n_tp: int
    n_fp: int


@dataclass(frozen=True)
class BoundaryErrorStats:
    class_id: int
    start_mean_s: float
    start_std_s: float
    end_mean_s: float
    end_std_s: float
    matched: int
    missed: int


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    per_class: dict[int, dict[float, APResult]]
    map_per_threshold: dict[float, float]
    avg_map: float
    boundary: dict[int, BoundaryErrorStats]
    excluded_classes: tuple[int, ...] = field(default_factory=tuple)
    n_classes: int = N_EVENT_CLASSES


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection over union of two (start, end) intervals."""
    a0, a1 = float(a[0]), float(a[1])
    b0, b1 = float(b[0]), float(b[1])
    if not (a0 <= a1 and b0 <= b1):
        raise ValueError(f"invalid intervals {a} / {b}")
    inter = min(a1, b1) - max(a0, b0)
    if inter <= 0.0:
        return 0.0
    union = max(a1, b1) - min(a0, b0)
    if union <= 0.0:
        return 0.0
    return inter / union


def _det_order(dets: list[DetectionSegment]) -> list[DetectionSegment]:
    # descending score; ties broken by earlier start, then trial id
    return sorted(dets, key=lambda d: (-d.score, d.start_s, d.trial_id))


def match_detections(
    dets: list[DetectionSegment], gts: list[GtSegment], threshold: float
) -> list[bool]:
    """TP/FP labels for one class's detections, in score-sorted order.

    Each detection, in descending score order, claims the unmatched
    ground-truth segment in its own trial with the highest tIoU, provided
    that tIoU reaches the threshold. Each ground truth matches at most once.
    """
    order = _det_order(dets)
    gt_sorted = sorted(gts, key=lambda g: (g.trial_id, g.start_s, g.end_s))
    taken = [False] * len(gt_sorted)
    labels: list[bool] = []
    for det in order:
        best = -1.0
        best_j = -1
        for j, gt in enumerate(gt_sorted):
            if taken[j] or gt.trial_id != det.trial_id:
                continue
            t = tiou((det.start_s, det.end_s), (gt.start_s, gt.end_s))
            if t > best:
                best = t
                best_j = j
        if best_j >= 0 and best >= threshold:
            taken[best_j] = True
            labels.append(True)
        else:
            labels.append(False)
    return labels


def average_precision(
    dets: list[DetectionSegment], gts: list[GtSegment], threshold: float
) -> APResult | None:
    """AP for one class at one tIoU threshold; None when the class has no
    ground truth (such classes are excluded from mAP and recorded)."""
    class_ids = {g.class_id for g in gts} | {d.class_id for d in dets}
    if len(class_ids) > 1:
        raise ValueError(f"average_precision expects a single class, got {sorted(class_ids)}")
    cid = class_ids.pop() if class_ids else -1
    if not gts:
        return None
    labels = match_detections(dets, gts, threshold)
    n_tp = sum(labels)
    n_fp = len(labels) - n_tp
    if not labels:
        return APResult(cid, threshold, 0.0, len(gts), 0, 0)
    tp = np.cumsum(np.asarray(labels, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(labels, dtype=np.float64))
    recall = tp / len(gts)
    precision = tp / (tp + fp)
    # monotone envelope + step integration over distinct recall points
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.flatnonzero(mrec[1:] != mrec[:-1]) + 1
    ap = float(np.sum((mrec[changed] - mrec[changed - 1]) * mpre[changed]))
    return APResult(cid, threshold, ap, len(gts), int(n_tp), int(n_fp))


def map_at(
    dets: list[DetectionSegment],
    gts: list[GtSegment],
    thresholds: tuple[float, ...] = (0.25, 0.50, 0.75),
    n_classes: int = N_EVENT_CLASSES,
) -> EvalReport:
    """Per-threshold mAP over classes with ground truth, plus their mean."""
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds:
        raise ValueError("at least one tIoU threshold required")
    by_class_det: dict[int, list[DetectionSegment]] = {c: [] for c in range(n_classes)}
    by_class_gt: dict[int, list[GtSegment]] = {c: [] for c in range(n_classes)}
    for d in dets:
        if not 0 <= d.class_id < n_classes:
            raise ValueError(f"detection class id out of range: {d.class_id}")
        by_class_det[d.class_id].append(d)
    for g in gts:
        if not 0 <= g.class_id < n_classes:
            raise ValueError(f"ground-truth class id out of range: {g.class_id}")
        by_class_gt[g.class_id].append(g)

    per_class: dict[int, dict[float, APResult]] = {}
    excluded = tuple(c for c in range(n_classes) if not by_class_gt[c])
    for c in range(n_classes):
        if c in excluded:
            continue
        per_class[c] = {}
        for thr in thresholds:
            res = average_precision(by_class_det[c], by_class_gt[c], thr)
            assert res is not None
            per_class[c][thr] = res

    map_per_threshold = {}
    for thr in thresholds:
        aps = [per_class[c][thr].ap for c in per_class]
        map_per_threshold[thr] = float(np.mean(aps)) if aps else 0.0
    avg_map = average_map(map_per_threshold)
    return EvalReport(
        thresholds=thresholds,
        per_class=per_class,
        map_per_threshold=map_per_threshold,
        avg_map=avg_map,
        boundary=boundary_errors(dets, gts, n_classes=n_classes),
        excluded_classes=excluded,
        n_classes=n_classes,
    )


def average_map(map_per_threshold: dict[float, float]) -> float:
    """Average mAP: the arithmetic mean of per-threshold mAPs."""
    if not map_per_threshold:
        raise ValueError("no per-threshold mAPs to average")
    return float(np.mean([map_per_threshold[t] for t in sorted(map_per_threshold)]))


def boundary_errors(
    dets: list[DetectionSegment],
    gts: list[GtSegment],
    n_classes: int = N_EVENT_CLASSES,
) -> dict[int, BoundaryErrorStats]:
    """Per-class |start| and |end| error stats over greedily matched GTs.

    Ground truths are processed in start order; each claims the same-class
    same-trial detection with the highest positive tIoU that no earlier GT
    claimed. Stats use the sample standard deviation (N-1 denominator,
    0.0 when only one match); unmatched GTs count as missed.
    """
    out: dict[int, BoundaryErrorStats] = {}
    for c in range(n_classes):
        cgts = sorted(
            (g for g in gts if g.class_id == c), key=lambda g: (g.start_s, g.trial_id, g.end_s)
        )
        cdets = [d for d in dets if d.class_id == c]
        if not cgts:
            continue
        used = [False] * len(cdets)
        starts: list[float] = []
        ends: list[float] = []
        missed = 0
        for gt in cgts:
            best = 0.0
            best_j = -1
            for j, d in enumerate(cdets):
                if used[j] or d.trial_id != gt.trial_id:
                    continue
                t = tiou((d.start_s, d.end_s), (gt.start_s, gt.end_s))
                if t > best:
                    best = t
                    best_j = j
            if best_j < 0:
                missed += 1
                continue
            used[best_j] = True
            starts.append(abs(cdets[best_j].start_s - gt.start_s))
            ends.append(abs(cdets[best_j].end_s - gt.end_s))
        if starts:
            s = np.asarray(starts)
            e = np.asarray(ends)
            s_std = float(s.std(ddof=1)) if len(s) > 1 else 0.0
            e_std = float(e.std(ddof=1)) if len(e) > 1 else 0.0
            out[c] = BoundaryErrorStats(
                c, float(s.mean()), s_std, float(e.mean()), e_std, len(starts), missed
            )
        else:
            out[c] = BoundaryErrorStats(c, 0.0, 0.0, 0.0, 0.0, 0, missed)
    return out


def format_percent(x: float) -> str:
    """Two-decimal percentage string for fractional metrics (0.7075 -> '70.75')."""
    return f"{100.0 * x:.2f}"
