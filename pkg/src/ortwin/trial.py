"""Core data model for recorded trials.

A trial is a fixed-rate sequence of frames, each carrying a semantic mask
grid (uint8 class ids) and a metric depth grid (meters), plus the list of
ground-truth event segments. Frames are stored stacked as arrays for
efficiency; :meth:`TrialRecording.frame` exposes the per-frame view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ortwin.vocab import EVENT_CLASSES, N_MASK_VALUES

DEPTH_MAX_M = 20.0


@dataclass(frozen=True)
class DigitalTwinFrame:
    mask: np.ndarray  # H x W uint8, values 0..14
    depth: np.ndarray  # H x W float64 meters, in [0, DEPTH_MAX_M]
    timestamp_s: float

    def __post_init__(self):
        if self.mask.shape != self.depth.shape:
            raise ValueError(f"mask shape {self.mask.shape} != depth shape {self.depth.shape}")
        if self.mask.size:
            mmax = int(self.mask.max())
            if mmax >= N_MASK_VALUES:
                raise ValueError(f"mask class id {mmax} out of range 0..{N_MASK_VALUES - 1}")
        if self.depth.size and not np.all(np.isfinite(self.depth)):
            raise ValueError("depth contains non-finite values")
        if self.depth.size and (self.depth.min() < 0.0 or self.depth.max() > DEPTH_MAX_M):
            raise ValueError("depth outside [0, 20] m")


@dataclass(frozen=True)
class EventSegment:
    class_id: int
    start_s: float
    end_s: float

    def __post_init__(self):
        if not 0 <= self.class_id < len(EVENT_CLASSES):
            raise ValueError(f"event class id out of range: {self.class_id}")
        if not 0.0 <= self.start_s < self.end_s:
            raise ValueError(f"bad event interval [{self.start_s}, {self.end_s})")


@dataclass
class TrialRecording:
    trial_id: int
    room_id: int
    fps: float
    masks: np.ndarray  # F x H x W uint8
    depth: np.ndarray  # F x H x W float64 meters
    events: list[EventSegment] = field(default_factory=list)
    seed: int = 0
    depth_scale: float = 0.001

    def __post_init__(self):
        if self.masks.shape != self.depth.shape:
            raise ValueError(
                f"mask stack shape {self.masks.shape} != depth stack shape {self.depth.shape}"
            )
        if self.masks.ndim != 3:
            raise ValueError(f"expected F x H x W stacks, got shape {self.masks.shape}")
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        dur = self.duration_s
        per_class: dict[int, list[EventSegment]] = {}
        for ev in self.events:
            if ev.end_s > dur + 1e-9:
                raise ValueError(f"event ends at {ev.end_s}s but trial lasts {dur}s")
            per_class.setdefault(ev.class_id, []).append(ev)
        for evs in per_class.values():
            evs = sorted(evs, key=lambda e: e.start_s)
            for prev, nxt in zip(evs, evs[1:]):
                if nxt.start_s < prev.end_s:
                    raise ValueError("events of one class overlap")

    @property
    def n_frames(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def frame(self, k: int) -> DigitalTwinFrame:
        if not 0 <= k < self.n_frames:
            raise IndexError(f"frame {k} out of range 0..{self.n_frames - 1}")
        return DigitalTwinFrame(
            mask=self.masks[k], depth=self.depth[k], timestamp_s=k / self.fps
        )
