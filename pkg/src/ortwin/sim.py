"""Procedural operating-room simulator.

Each trial scripts one patient's passage through an OR on a coarse
top-down grid: a gurney enters through the door and parks in a bay, the
patient is prepped on the table (the bed rises), an IV pole appears while
the patient is readied to leave, the gurney docks tableside and the
patient slides onto it, and finally gurney plus patient roll out the door.
Staff wander continuously in reserved floor zones, independent of the
phase timeline, so their motion carries no event information.

Geometry is axis-aligned rectangles on a 48x64 default grid (other sizes
scale proportionally). Rendering is painter's order: later actors occlude
earlier ones. Depth is a per-room background field minus each object's
height above the floor, i.e. a top-down orthographic camera.

Detectability is engineered per modality:

* the gurney and the staff have zero height, so they exist only in the
  mask stream (depth stays people-free and flicker-free);
* patient preparation changes only depth: the bed rises 0.4 m and the
  surgical light drops over the patient, while the mask on every cue
  cell stays bit-identical across both boundaries (staff churn
  elsewhere is phase-independent);
* the remaining phases move the patient or the IV pole, visible in both.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ortwin.rng import Rng
from ortwin.storage import DatasetManifest, write_manifest, write_trial
from ortwin.trial import DigitalTwinFrame, EventSegment, TrialRecording
from ortwin.vocab import EVENT_TO_ID, OBJECT_TO_ID

# event ids
EV_PREP = EVENT_TO_ID["Patient Preparation"]
EV_GURNEY_IN = EVENT_TO_ID["Gurney Entering"]
EV_LOAD = EVENT_TO_ID["Loading patient to gurney"]
EV_LEAVE_PREP = EVENT_TO_ID["Preparing patient to leave"]
EV_OUT = EVENT_TO_ID["Patient out of the room"]

# Object heights above floor, meters; depth = background - height. The
# camera sits high (background ~19 m) and equipment heights span most of
# the encodable 0..20 m range: spatial pooling averages each depth value
# over the whole grid, so a cue must move many meters on its cells to stay
# visible afterwards. Exaggerated vertical scale is the one knob the
# synthetic world has for that.
OBJECT_HEIGHT_M = {
    "or_table": 6.0,
    "gurney": 0.0,  # depth-neutral by design: mask-only cue
    "patient": 9.0,  # nominal; rendering uses the per-trial height track
    # staff render at floor level: people are a de-identified crowd in the
    # mask stream only. At full height their constant wandering would put
    # depth flicker on the same pooled bins as every equipment cue.
    "staff": 0.0,
    "anesthesia_cart": 7.2,
    "door": 0.0,  # floor threshold marker
    "instrument_table": 5.4,
    "monitor": 9.6,
    "surgical_light": 15.0,
    "stool": 3.0,
    "machine": 8.4,
    "cabinet": 11.4,
    "trash_bin": 4.2,
    "iv_pole": 12.0,
}

TABLE_RAISE_M = 0.4
# the surgical light is pulled down over the patient while prepping: a
# second depth-only preparation cue (the light's mask cells never change,
# and 0.4 m of bed raise alone is sub-noise once pooling averages it).
# The fixture is a wide array spanning most of the table: spatial pooling
# divides every cell delta by the patch count, so the cue needs both area
# and travel to survive averaging.
LIGHT_DROP_M = 7.0
PATIENT_ON_TABLE_ABOVE_M = 0.3  # patient rides on the table surface
PATIENT_ON_GURNEY_M = 4.0
TRANSFER_ROWS = 5  # patient slide distance, one row per second

BASE_H, BASE_W = 48, 64

N_ROOMS = 7
STAFF_COUNT = 3
STAFF_SPEED = 2.0  # cells per second
GURNEY_SETTLE_S = 2.0


@dataclass(frozen=True)
class Rect:
    """Axis-aligned cell rectangle, rows r0..r0+h-1, cols c0..c0+w-1."""

    r0: int
    c0: int
    h: int
    w: int

    def shifted(self, dr: int, dc: int) -> "Rect":
        return Rect(self.r0 + dr, self.c0 + dc, self.h, self.w)

    @property
    def r1(self) -> int:
        return self.r0 + self.h - 1

    @property
    def c1(self) -> int:
        return self.c0 + self.w - 1

    def overlaps(self, other: "Rect") -> bool:
        return not (
            self.r1 < other.r0
            or other.r1 < self.r0
            or self.c1 < other.c0
            or other.c1 < self.c0
        )

    def contains(self, r: int, c: int) -> bool:
        return self.r0 <= r <= self.r1 and self.c0 <= c <= self.c1


@dataclass(frozen=True)
class RoomLayout:
    room_id: int
    height: int
    width: int
    door: Rect
    door_region: Rect
    table: Rect
    tableside: Rect  # gurney dock position during loading
    bay: Rect  # gurney parking spot
    bay2: Rect  # second parking spot (busy scenario)
    pole: Rect
    light: Rect
    furniture: tuple[tuple[str, Rect], ...]
    staff_zones: tuple[Rect, ...]
    depth_base: float
    depth_grad_r: float
    depth_grad_c: float
    # route anchors for the gurney (top-left of its rect)
    door_inside: tuple[int, int]
    corridor_row: int  # row of the upper corridor
    west_col: int  # column of the exit leg west of the table

    def background(self) -> np.ndarray:
        r = np.arange(self.height, dtype=np.float64)[:, None]
        c = np.arange(self.width, dtype=np.float64)[None, :]
        return self.depth_base + self.depth_grad_r * r + self.depth_grad_c * c


GURNEY_H, GURNEY_W = 6, 10
PATIENT_H, PATIENT_W = 4, 8
STAFF_H, STAFF_W = 2, 2  # head-and-shoulders footprint from overhead


def _scaled(rect: Rect, sr: float, sc: float) -> Rect:
    r0 = int(round(rect.r0 * sr))
    c0 = int(round(rect.c0 * sc))
    h = max(1, int(round(rect.h * sr)))
    w = max(1, int(round(rect.w * sc)))
    return Rect(r0, c0, h, w)


def room_layout(room_id: int, height: int = BASE_H, width: int = BASE_W) -> RoomLayout:
    """Deterministic per-room geometry; rooms differ in door position,
    table placement, bay side, depth field, and furniture selection."""
    if not 0 <= room_id < N_ROOMS:
        raise ValueError(f"room_id must be 0..{N_ROOMS - 1}, got {room_id}")
    if height < 16 or width < 16:
        raise ValueError(f"grid too small: {height}x{width} (need >= 16x16)")

    dc = 6 + 6 * room_id
    tr = 20 + room_id % 3
    tc = 23 + 2 * (room_id % 4)
    wc = tc - 12
    left_bay = room_id % 2 == 0

    door = Rect(0, dc, 2, GURNEY_W)
    door_region = Rect(0, dc - 2, 8, GURNEY_W + 4)
    table = Rect(tr, tc, 5, 16)
    tableside = Rect(tr + 5, tc, GURNEY_H, GURNEY_W)
    bay_left = Rect(40, 2, GURNEY_H, GURNEY_W)
    bay_right = Rect(40, 52, GURNEY_H, GURNEY_W)
    bay, bay2 = (bay_left, bay_right) if left_bay else (bay_right, bay_left)
    pole = Rect(tr, tc + 16, 2, 2)
    # the light array hangs over the table, fully covering the patient's
    # resting spot: the patient is mask-hidden until the slide carries the
    # rect south past the table edge
    light = Rect(tr, tc + 1, 5, 14)

    # staff zones keep clear of the table, pole, door region and bays so
    # wandering staff never mask-occlude the cells that carry an event cue
    zone_a = Rect(16, 48, 14, 12)  # east block, right of the pole
    zone_b = Rect(10, 18, 5, 22)  # strip between corridor and table
    zone_c = Rect(41, 16, 5, 31)  # bottom strip between the bays
    staff_zones = (zone_a, zone_b, zone_c)

    # furniture slots line the north wall, clear of the door region
    slots: list[Rect] = []
    for c0 in (2, 9, 16, 23, 30, 37, 44, 51, 57):
        cand = Rect(2, c0, 5, 6)
        if cand.c1 <= 63 and not cand.overlaps(door_region):
            slots.append(cand)
    picker = Rng(1000 + room_id)
    order = list(range(len(slots)))
    picker.shuffle(order)
    classes = [
        "anesthesia_cart",
        "instrument_table",
        "monitor",
        "machine",
        "cabinet",
        "stool",
        "trash_bin",
    ]
    n_furn = 5 + picker.uniform_int(0, 2)
    furniture = tuple(
        (classes[i % len(classes)], slots[order[i]]) for i in range(min(n_furn, len(slots)))
    )

    layout = RoomLayout(
        room_id=room_id,
        height=BASE_H,
        width=BASE_W,
        door=door,
        door_region=door_region,
        table=table,
        tableside=tableside,
        bay=bay,
        bay2=bay2,
        pole=pole,
        light=light,
        furniture=furniture,
        staff_zones=staff_zones,
        depth_base=19.0 + 0.08 * room_id,
        depth_grad_r=0.003 + 0.0005 * (room_id % 3),
        depth_grad_c=0.002 - 0.0005 * (room_id % 2),
        door_inside=(2, dc),
        corridor_row=8,
        west_col=wc,
    )
    if (height, width) != (BASE_H, BASE_W):
        sr, sc = height / BASE_H, width / BASE_W
        layout = replace(
            layout,
            height=height,
            width=width,
            door=_scaled(door, sr, sc),
            door_region=_scaled(door_region, sr, sc),
            table=_scaled(table, sr, sc),
            tableside=_scaled(tableside, sr, sc),
            bay=_scaled(bay, sr, sc),
            bay2=_scaled(bay2, sr, sc),
            pole=_scaled(pole, sr, sc),
            light=_scaled(light, sr, sc),
            furniture=tuple((k, _scaled(rc, sr, sc)) for k, rc in furniture),
            staff_zones=tuple(_scaled(z, sr, sc) for z in staff_zones),
            door_inside=(max(0, int(round(2 * sr))), int(round(dc * sc))),
            corridor_row=max(2, int(round(8 * sr))),
            west_col=max(0, int(round(wc * sc))),
        )
    return layout


def _actor_dims(layout: RoomLayout) -> tuple[int, int, int, int, int, int]:
    sr, sc = layout.height / BASE_H, layout.width / BASE_W
    gh = max(2, int(round(GURNEY_H * sr)))
    gw = max(2, int(round(GURNEY_W * sc)))
    ph = max(1, gh - 2)
    pw = max(1, gw - 2)
    sh = max(1, int(round(STAFF_H * sr)))
    sw = max(1, int(round(STAFF_W * sc)))
    return gh, gw, ph, pw, sh, sw


# -- scenario and scripting ----------------------------------------------------


@dataclass(frozen=True)
class PhaseRange:
    lo: int
    hi: int  # inclusive, integer seconds

    def draw(self, rng: Rng) -> int:
        if not 0 <= self.lo <= self.hi:
            raise ValueError(f"bad phase range [{self.lo}, {self.hi}]")
        return rng.uniform_int(self.lo, self.hi)


@dataclass(frozen=True)
class ScenarioScript:
    """Phase duration ranges (seconds) in canonical order. The partial
    order gurney-in < preparation < leave-prep < loading < out is built
    into how the phases chain; overlap pulls loading's start back into
    the leave-prep tail.

    The wide pre/gap ranges are deliberate: with a tight schedule a model
    can place the depth-only preparation phase from the mask-visible
    gurney arrival (or from absolute time) without ever seeing its cue,
    and the modality ablations stop being informative."""

    pre: PhaseRange = PhaseRange(20, 50)
    gurney_in: PhaseRange = PhaseRange(25, 40)
    gap_after_gurney: PhaseRange = PhaseRange(10, 60)
    preparation: PhaseRange = PhaseRange(45, 85)
    gap_after_prep: PhaseRange = PhaseRange(50, 85)
    leave_prep: PhaseRange = PhaseRange(35, 50)
    load_overlap: PhaseRange = PhaseRange(0, 10)
    loading: PhaseRange = PhaseRange(25, 40)
    gap_before_out: PhaseRange = PhaseRange(5, 15)
    out: PhaseRange = PhaseRange(15, 25)
    post: PhaseRange = PhaseRange(20, 25)
    busy: bool = False  # allow a second gurney entering mid-trial


@dataclass(frozen=True)
class Track:
    """Piecewise-linear keyframed anchor track for one actor rectangle.

    Keyframes are (time_s, row, col) for the rect's top-left corner;
    present only within [appear_s, vanish_s)."""

    keys: tuple[tuple[float, float, float], ...]
    appear_s: float
    vanish_s: float

    def anchor_at(self, t: float) -> tuple[int, int] | None:
        if not self.appear_s <= t < self.vanish_s:
            return None
        keys = self.keys
        if t <= keys[0][0]:
            return int(round(keys[0][1])), int(round(keys[0][2]))
        for (t0, r0, c0), (t1, r1, c1) in zip(keys, keys[1:]):
            if t <= t1:
                f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
                return int(round(r0 + f * (r1 - r0))), int(round(c0 + f * (c1 - c0)))
        return int(round(keys[-1][1])), int(round(keys[-1][2]))


@dataclass
class Timeline:
    duration_s: float
    gurney: Track
    gurney2: Track | None
    patient: Track
    patient_height: tuple[tuple[float, float], ...]  # (time, height) keyframes
    staff: tuple[Track, ...]
    pole_interval: tuple[float, float]
    prep_interval: tuple[float, float]


def _leg_keys(
    start_t: float, anchors: list[tuple[int, int]], end_t: float
) -> list[tuple[float, float, float]]:
    """Time keyframes along a polyline, allotting time per leg length."""
    lengths = [
        abs(b[0] - a[0]) + abs(b[1] - a[1]) for a, b in zip(anchors, anchors[1:])
    ]
    total = max(sum(lengths), 1)
    keys = [(start_t, float(anchors[0][0]), float(anchors[0][1]))]
    t = start_t
    for (r, c), seg in zip(anchors[1:], lengths):
        t = t + (end_t - start_t) * seg / total
        keys.append((t, float(r), float(c)))
    keys[-1] = (end_t, keys[-1][1], keys[-1][2])
    return keys


def script_trial(
    seed: int, room_id: int, scenario: ScenarioScript, layout: RoomLayout | None = None
) -> tuple[Timeline, list[EventSegment]]:
    """Draw the phase timeline and actor tracks for one trial.

    Draw order is fixed (eleven phase durations, then the optional busy
    extension, then staff walks) so identical seeds give identical trials.
    """
    if layout is None:
        layout = room_layout(room_id)
    rng = Rng(seed)
    sc = scenario
    pre = sc.pre.draw(rng)
    ge_len = sc.gurney_in.draw(rng)
    gap1 = sc.gap_after_gurney.draw(rng)
    prep_len = sc.preparation.draw(rng)
    gap2 = sc.gap_after_prep.draw(rng)
    lv_len = sc.leave_prep.draw(rng)
    overlap = sc.load_overlap.draw(rng)
    load_len = sc.loading.draw(rng)
    gap3 = sc.gap_before_out.draw(rng)
    out_len = sc.out.draw(rng)
    post = sc.post.draw(rng)

    ge = (float(pre), float(pre + ge_len))
    prep = (ge[1] + gap1, ge[1] + gap1 + prep_len)
    leave = (prep[1] + gap2, prep[1] + gap2 + lv_len)
    load = (leave[1] - overlap, leave[1] - overlap + load_len)
    out = (load[1] + gap3, load[1] + gap3 + out_len)
    duration = out[1] + post

    events = [
        EventSegment(EV_GURNEY_IN, *ge),
        EventSegment(EV_PREP, *prep),
        EventSegment(EV_LEAVE_PREP, *leave),
        EventSegment(EV_LOAD, *load),
        EventSegment(EV_OUT, *out),
    ]

    crow = layout.corridor_row
    din = layout.door_inside
    bay = (layout.bay.r0, layout.bay.c0)
    dock = (layout.tableside.r0, layout.tableside.c0)
    wleg = (layout.tableside.r0, layout.west_col)
    wtop = (crow, layout.west_col)

    # gurney: enter to bay, wait, dock tableside, wait, exit out the door;
    # explicit hold keyframes pin it in place between movements
    travel = max(load[1] - load[0] - TRANSFER_ROWS - GURNEY_SETTLE_S, 4.0)
    gurney_keys = (
        _leg_keys(ge[0], [din, (crow, din[1]), (crow, bay[1]), bay], ge[1])
        + [(load[0], float(bay[0]), float(bay[1]))]
        + _leg_keys(load[0], [bay, (dock[0], bay[1]), dock], load[0] + travel)[1:]
        + [(out[0], float(dock[0]), float(dock[1]))]
        + _leg_keys(out[0], [dock, wleg, wtop, (crow, din[1]), din], out[1])[1:]
    )
    gurney = Track(tuple(gurney_keys), appear_s=ge[0], vanish_s=out[1])

    # second gurney in the busy variant, parked at the spare bay
    gurney2 = None
    if sc.busy:
        off = rng.uniform_int(10, 20)
        g2_len = rng.uniform_int(25, 45)
        latest = gap2 - 2
        if off + g2_len <= latest:
            g2 = (prep[1] + off, prep[1] + off + g2_len)
            bay2 = (layout.bay2.r0, layout.bay2.c0)
            keys = _leg_keys(g2[0], [din, (crow, din[1]), (crow, bay2[1]), bay2], g2[1])
            gurney2 = Track(tuple(keys), appear_s=g2[0], vanish_s=duration + 1.0)
            events.append(EventSegment(EV_GURNEY_IN, *g2))

    # patient: on the table from the start; slides onto the gurney during
    # the last TRANSFER_ROWS seconds of loading (one row per second), rides
    # out with it
    on_table = (layout.table.r0 + 1, layout.table.c0 + 1)
    on_dock = (layout.tableside.r0 + 1, layout.tableside.c0 + 1)
    slide0 = load[1] - TRANSFER_ROWS
    ride = [
        (t, r + (on_dock[0] - dock[0]), c + (on_dock[1] - dock[1]))
        for (t, r, c) in _leg_keys(out[0], [dock, wleg, wtop, (crow, din[1]), din], out[1])
    ]
    patient_keys = (
        [(0.0, float(on_table[0]), float(on_table[1]))]
        + [(slide0, float(on_table[0]), float(on_table[1]))]
        + [(load[1], float(on_dock[0]), float(on_dock[1]))]
        + ride
    )
    patient = Track(tuple(patient_keys), appear_s=0.0, vanish_s=out[1])
    # stay at table-top level for the whole slide (the gurney is raised to
    # meet the table), dropping only in the last second once the patient
    # rect is clear of the table; a mid-slide dip below the table's height
    # would let the table paint over the patient
    patient_height = (
        (0.0, OBJECT_HEIGHT_M["or_table"] + PATIENT_ON_TABLE_ABOVE_M),
        (load[1] - 1.0, OBJECT_HEIGHT_M["or_table"] + PATIENT_ON_TABLE_ABOVE_M),
        (load[1], PATIENT_ON_GURNEY_M),
    )

    # staff wander their zones for the whole trial, phase-independent
    gh, gw, ph, pw, sh, sw = _actor_dims(layout)
    staff_tracks = []
    for i in range(STAFF_COUNT):
        zone = layout.staff_zones[i % len(layout.staff_zones)]
        rmax = max(zone.r0, zone.r1 - sh + 1)
        cmax = max(zone.c0, zone.c1 - sw + 1)
        keys = [
            (
                0.0,
                float(rng.uniform_int(zone.r0, rmax)),
                float(rng.uniform_int(zone.c0, cmax)),
            )
        ]
        t = 0.0
        while t < duration + 2.0:
            r = float(rng.uniform_int(zone.r0, rmax))
            c = float(rng.uniform_int(zone.c0, cmax))
            dist = abs(r - keys[-1][1]) + abs(c - keys[-1][2])
            t += max(dist / STAFF_SPEED, 1.0)
            keys.append((t, r, c))
            pause = rng.uniform_int(2, 6)
            t += pause
            keys.append((t, r, c))
        staff_tracks.append(Track(tuple(keys), appear_s=0.0, vanish_s=duration + 2.0))

    timeline = Timeline(
        duration_s=duration,
        gurney=gurney,
        gurney2=gurney2,
        patient=patient,
        patient_height=patient_height,
        staff=tuple(staff_tracks),
        pole_interval=leave,
        prep_interval=prep,
    )
    return timeline, events


def _height_at(keys: tuple[tuple[float, float], ...], t: float) -> float:
    if t <= keys[0][0]:
        return keys[0][1]
    for (t0, h0), (t1, h1) in zip(keys, keys[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return h0 + f * (h1 - h0)
    return keys[-1][1]


@dataclass(frozen=True)
class PlacedObject:
    class_name: str
    rect: Rect
    height_m: float


def scene_at(timeline: Timeline, layout: RoomLayout, t: float) -> list[PlacedObject]:
    """All objects present at time t, in painter's order."""
    gh, gw, ph, pw, sh, sw = _actor_dims(layout)
    prep0, prep1 = timeline.prep_interval
    prepping = prep0 <= t < prep1
    table_h = OBJECT_HEIGHT_M["or_table"] + (TABLE_RAISE_M if prepping else 0.0)
    # both preparation cues are depth-only: the raised bed and the light
    # pulled down over it occupy the same mask cells throughout
    light_h = OBJECT_HEIGHT_M["surgical_light"] - (LIGHT_DROP_M if prepping else 0.0)

    placed = [
        PlacedObject("door", layout.door, OBJECT_HEIGHT_M["door"]),
        PlacedObject("or_table", layout.table, table_h),
    ]
    for cls, rect in layout.furniture:
        placed.append(PlacedObject(cls, rect, OBJECT_HEIGHT_M[cls]))
    placed.append(PlacedObject("surgical_light", layout.light, light_h))

    for track in (timeline.gurney, timeline.gurney2):
        if track is None:
            continue
        a = track.anchor_at(t)
        if a is not None:
            placed.append(
                PlacedObject("gurney", Rect(a[0], a[1], gh, gw), OBJECT_HEIGHT_M["gurney"])
            )

    pa = timeline.patient.anchor_at(t)
    if pa is not None:
        h = _height_at(timeline.patient_height, t)
        if prep0 <= t < prep1:
            h += TABLE_RAISE_M  # the patient rides on the raised bed
        placed.append(PlacedObject("patient", Rect(pa[0], pa[1], ph, pw), h))

    p0, p1 = timeline.pole_interval
    if p0 <= t < p1:
        placed.append(PlacedObject("iv_pole", layout.pole, OBJECT_HEIGHT_M["iv_pole"]))

    for track in timeline.staff:
        a = track.anchor_at(t)
        if a is not None:
            placed.append(PlacedObject("staff", Rect(a[0], a[1], sh, sw), OBJECT_HEIGHT_M["staff"]))
    return placed


def render_frame(
    placed: list[PlacedObject], layout: RoomLayout, timestamp_s: float = 0.0
) -> DigitalTwinFrame:
    """Rasterize a scene: painter's-order class ids and background-minus-
    height depth. Far-to-near for a top-down camera means ascending height,
    so taller objects occlude shorter ones; ties keep scene order (actors
    over floor markers)."""
    mask = np.zeros((layout.height, layout.width), dtype=np.uint8)
    depth = layout.background()
    bg = depth.copy()
    for obj in sorted(placed, key=lambda o: o.height_m):
        r = obj.rect
        if r.r0 < 0 or r.c0 < 0 or r.r1 >= layout.height or r.c1 >= layout.width:
            raise ValueError(
                f"{obj.class_name} out of bounds at rows {r.r0}..{r.r1}, cols {r.c0}..{r.c1}"
            )
        mask[r.r0 : r.r1 + 1, r.c0 : r.c1 + 1] = OBJECT_TO_ID[obj.class_name]
        depth[r.r0 : r.r1 + 1, r.c0 : r.c1 + 1] = (
            bg[r.r0 : r.r1 + 1, r.c0 : r.c1 + 1] - obj.height_m
        )
    return DigitalTwinFrame(mask=mask, depth=depth, timestamp_s=timestamp_s)


# -- trial and dataset generation ------------------------------------------------


@dataclass(frozen=True)
class TrialConfig:
    seed: int
    room_id: int
    fps: float = 1.0
    height: int = BASE_H
    width: int = BASE_W
    scenario: ScenarioScript = field(default_factory=ScenarioScript)

    def __post_init__(self):
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.height < 16 or self.width < 16:
            raise ValueError(f"grid too small: {self.height}x{self.width}")
        if not 0 <= self.room_id < N_ROOMS:
            raise ValueError(f"room_id must be 0..{N_ROOMS - 1}, got {self.room_id}")


def generate_trial(cfg: TrialConfig, trial_id: int = 0) -> TrialRecording:
    layout = room_layout(cfg.room_id, cfg.height, cfg.width)
    timeline, events = script_trial(cfg.seed, cfg.room_id, cfg.scenario, layout)
    n_frames = int(round(timeline.duration_s * cfg.fps))
    masks = np.zeros((n_frames, cfg.height, cfg.width), dtype=np.uint8)
    depth = np.zeros((n_frames, cfg.height, cfg.width), dtype=np.float64)
    for k in range(n_frames):
        t = k / cfg.fps
        frame = render_frame(scene_at(timeline, layout, t), layout, t)
        masks[k] = frame.mask
        depth[k] = frame.depth
    return TrialRecording(
        trial_id=trial_id,
        room_id=cfg.room_id,
        fps=cfg.fps,
        masks=masks,
        depth=depth,
        events=sorted(events, key=lambda e: (e.class_id, e.start_s)),
        seed=cfg.seed,
    )


@dataclass(frozen=True)
class DatasetConfig:
    n_trials: int = 38
    n_rooms: int = N_ROOMS
    base_seed: int = 2024
    fps: float = 1.0
    height: int = BASE_H
    width: int = BASE_W
    n_train: int = 24
    n_val: int = 6
    n_test: int = 8
    scenario: ScenarioScript = field(default_factory=ScenarioScript)

    def __post_init__(self):
        if self.n_rooms > self.n_trials:
            raise ValueError("more rooms than trials")
        if not 0 < self.n_rooms <= N_ROOMS:
            raise ValueError(f"n_rooms must be 1..{N_ROOMS}")
        if self.n_train + self.n_val + self.n_test != self.n_trials:
            raise ValueError(
                f"split {self.n_train}/{self.n_val}/{self.n_test} does not sum "
                f"to {self.n_trials} trials"
            )

    def splits(self) -> dict[str, list[int]]:
        ids = list(range(self.n_trials))
        return {
            "train": ids[: self.n_train],
            "val": ids[self.n_train : self.n_train + self.n_val],
            "test": ids[self.n_train + self.n_val :],
        }


def generate_dataset(cfg: DatasetConfig, out_dir: Path, log=None) -> DatasetManifest:
    """Generate all trials to disk. Trials cycle through room layouts
    round-robin; trial k uses seed (base_seed XOR k); splits are whole
    trials in id order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for trial_id in range(cfg.n_trials):
        tcfg = TrialConfig(
            seed=cfg.base_seed ^ trial_id,
            room_id=trial_id % cfg.n_rooms,
            fps=cfg.fps,
            height=cfg.height,
            width=cfg.width,
            scenario=cfg.scenario,
        )
        rec = generate_trial(tcfg, trial_id=trial_id)
        write_trial(rec, out_dir)
        if log:
            log(f"trial {trial_id:2d}: room {rec.room_id}, {rec.n_frames} frames, "
                f"{len(rec.events)} events")
    manifest = DatasetManifest(
        n_trials=cfg.n_trials,
        n_rooms=cfg.n_rooms,
        base_seed=cfg.base_seed,
        fps=cfg.fps,
        height=cfg.height,
        width=cfg.width,
        splits=cfg.splits(),
    )
    write_manifest(out_dir / "manifest.json", manifest)
    return manifest
