"""Turn per-frame class probabilities into scored event segments.

The rule, per class: smooth with a centered moving average, keep frames at
or above the threshold, merge runs split by short below-threshold gaps,
drop merged runs shorter than the minimum length, and report each survivor
as a half-open time interval with a score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ExtractionConfig:
    threshold: float = 0.5
    smooth_width: int = 5  # odd, frames
    merge_gap: int = 2  # frames
    min_len: int = 3  # frames

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0,1), got {self.threshold}")
        if self.smooth_width < 1 or self.smooth_width % 2 == 0:
            raise ValueError(f"smooth_width must be odd >= 1, got {self.smooth_width}")
        if self.merge_gap < 0:
            raise ValueError(f"merge_gap must be >= 0, got {self.merge_gap}")
        if self.min_len < 1:
            raise ValueError(f"min_len must be >= 1, got {self.min_len}")


@dataclass(frozen=True)
class DetectionSegment:
    class_id: int
    start_s: float
    end_s: float
    score: float
    trial_id: int

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"segment start {self.start_s} must precede end {self.end_s}")


def smooth(probs: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average along axis 0, truncated and renormalized at
    the edges (each output is the mean of the in-range part of its window).
    """
    if width < 1 or width % 2 == 0:
        raise ValueError(f"smoothing width must be odd >= 1, got {width}")
    probs = np.asarray(probs, dtype=np.float64)
    squeeze = probs.ndim == 1
    if squeeze:
        probs = probs[:, None]
    if width == 1:
        out = probs.copy()
        return out[:, 0] if squeeze else out
    n = probs.shape[0]
    half = width // 2
    csum = np.zeros((n + 1,) + probs.shape[1:], dtype=np.float64)
    np.cumsum(probs, axis=0, out=csum[1:])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    out = (csum[hi] - csum[lo]) / (hi - lo).reshape((-1,) + (1,) * (probs.ndim - 1))
    return out[:, 0] if squeeze else out


def _runs(above: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as inclusive (first, last) frame pairs."""
    idx = np.flatnonzero(above)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    return [(int(idx[s]), int(idx[e])) for s, e in zip(starts, ends)]


def extract_segments(
    probs: np.ndarray,
    cfg: ExtractionConfig,
    fps: float,
    trial_id: int = 0,
) -> list[DetectionSegment]:
    """Per-class segment extraction; see module docstring for the rule.

    Segment span is [first_frame/fps, (last_frame+1)/fps). The score is the
    mean smoothed probability over the above-threshold member frames only;
    frames bridged by gap merging do not contribute.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"probs must be F x C, got shape {probs.shape}")
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    sm = smooth(probs, cfg.smooth_width)
    out: list[DetectionSegment] = []
    for c in range(probs.shape[1]):
        col = sm[:, c]
        above = col >= cfg.threshold
        runs = _runs(above)
        if not runs:
            continue
        merged: list[tuple[int, int]] = [runs[0]]
        for first, last in runs[1:]:
            pf, pl = merged[-1]
            if first - pl - 1 <= cfg.merge_gap:
                merged[-1] = (pf, last)
            else:
                merged.append((first, last))
        for first, last in merged:
            if last - first + 1 < cfg.min_len:
                continue
            member = above[first : last + 1]
            score = float(col[first : last + 1][member].mean())
            out.append(
                DetectionSegment(
                    class_id=c,
                    start_s=first / fps,
                    end_s=(last + 1) / fps,
                    score=score,
                    trial_id=trial_id,
                )
            )
    out.sort(key=lambda s: (s.class_id, s.start_s))
    return out
