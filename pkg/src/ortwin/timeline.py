"""Deterministic SVG timeline: ground truth vs detections per class.

Each event class gets two lanes (ground truth above, detections below)
on a shared second axis. Output is plain text with fixed element order
and fixed float formatting so identical inputs give identical bytes.
"""

from __future__ import annotations

from ortwin.metrics import GtSegment
from ortwin.segments import DetectionSegment
from ortwin.storage import ValidationError
from ortwin.vocab import EVENT_CLASSES, N_EVENT_CLASSES

# one fixed color per event class, in class-id order
CLASS_COLORS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3")

_LEFT = 180.0
_RIGHT = 40.0
_TOP = 48.0
_LANE_H = 16.0
_LANE_GAP = 4.0
_CLASS_GAP = 14.0
_PLOT_W = 720.0


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _tick_step(duration_s: float) -> float:
    for step in (1.0, 2.0, 5.0, 10.0, 30.0, 60.0, 120.0, 300.0, 600.0):
        if duration_s / step <= 12:
            return step
    return 1200.0


def render_timeline_svg(
    gts: list[GtSegment],
    dets: list[DetectionSegment],
    meta: dict,
) -> str:
    """Render one trial's event timeline; inputs outside the meta trial id
    are an error, inputs beyond the duration draw clipped."""
    trial_id = int(meta["trial_id"])
    duration = float(meta["n_frames"]) / float(meta["fps"])
    if duration <= 0:
        raise ValidationError("timeline needs a positive duration")
    for g in gts:
        if g.trial_id != trial_id:
            raise ValidationError(f"ground truth for trial {g.trial_id} in a trial-{trial_id} plot")
    for d in dets:
        if d.trial_id != trial_id:
            raise ValidationError(f"detection for trial {d.trial_id} in a trial-{trial_id} plot")

    row_h = 2 * _LANE_H + _LANE_GAP
    height = _TOP + N_EVENT_CLASSES * (row_h + _CLASS_GAP) + 40.0
    width = _LEFT + _PLOT_W + _RIGHT

    def x_of(t: float) -> float:
        return _LEFT + _PLOT_W * min(max(t, 0.0), duration) / duration

    parts: list[str] = []
    parts.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}" '
        f'font-family="sans-serif" font-size="11">'
    )
    parts.append(f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" fill="#ffffff"/>')
    parts.append(
        f'<text x="{_fmt(_LEFT)}" y="20" font-size="14" fill="#222222">'
        f"Trial {trial_id}: events over time</text>"
    )

    # second axis with ticks
    axis_y = height - 28.0
    parts.append(
        f'<line x1="{_fmt(_LEFT)}" y1="{_fmt(axis_y)}" x2="{_fmt(_LEFT + _PLOT_W)}" '
        f'y2="{_fmt(axis_y)}" stroke="#333333" stroke-width="1"/>'
    )
    step = _tick_step(duration)
    t = 0.0
    while t <= duration + 1e-9:
        x = x_of(t)
        parts.append(
            f'<line x1="{_fmt(x)}" y1="{_fmt(axis_y)}" x2="{_fmt(x)}" '
            f'y2="{_fmt(axis_y + 5.0)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(axis_y + 17.0)}" text-anchor="middle" '
            f'fill="#333333">{_fmt(t)}</text>'
        )
        t += step
    parts.append(
        f'<text x="{_fmt(_LEFT + _PLOT_W / 2)}" y="{_fmt(height - 2.0)}" '
        f'text-anchor="middle" fill="#333333">seconds</text>'
    )

    by_class_gt: dict[int, list[GtSegment]] = {c: [] for c in range(N_EVENT_CLASSES)}
    by_class_det: dict[int, list[DetectionSegment]] = {c: [] for c in range(N_EVENT_CLASSES)}
    for g in gts:
        by_class_gt[g.class_id].append(g)
    for d in dets:
        by_class_det[d.class_id].append(d)

    for c in range(N_EVENT_CLASSES):
        y0 = _TOP + c * (row_h + _CLASS_GAP)
        color = CLASS_COLORS[c]
        parts.append(
            f'<text x="{_fmt(_LEFT - 8.0)}" y="{_fmt(y0 + row_h / 2 + 4.0)}" '
            f'text-anchor="end" fill="#222222">{EVENT_CLASSES[c]}</text>'
        )
        # faint lane guides
        for lane in range(2):
            ly = y0 + lane * (_LANE_H + _LANE_GAP)
            parts.append(
                f'<rect x="{_fmt(_LEFT)}" y="{_fmt(ly)}" width="{_fmt(_PLOT_W)}" '
                f'height="{_fmt(_LANE_H)}" fill="#f2f2f2"/>'
            )
        for g in sorted(by_class_gt[c], key=lambda s: (s.start_s, s.end_s)):
            x0, x1 = x_of(g.start_s), x_of(g.end_s)
            parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(x1 - x0)}" '
                f'height="{_fmt(_LANE_H)}" fill="{color}"/>'
            )
        dy = y0 + _LANE_H + _LANE_GAP
        for d in sorted(by_class_det[c], key=lambda s: (s.start_s, s.end_s, -s.score)):
            x0, x1 = x_of(d.start_s), x_of(d.end_s)
            parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(dy)}" width="{_fmt(x1 - x0)}" '
                f'height="{_fmt(_LANE_H)}" fill="{color}" fill-opacity="{d.score:.3f}"/>'
            )

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
