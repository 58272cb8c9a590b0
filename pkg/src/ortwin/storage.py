"""On-disk formats: PGM grids, trial directories, JSONL records, binary
parameter container, dataset manifest, and the evaluation report.

Conventions:

* Masks are 8-bit binary PGM ("P5", maxval 255), pixel value = class id.
* Depth is 16-bit binary PGM (maxval 65535, big-endian samples per the PGM
  convention), stored value = round(depth_m / depth_scale).
* Everything human-readable is JSON or JSONL with strict field validation;
  unknown fields are rejected so format drift cannot pass silently.
* :class:`ValidationError` means malformed content (CLI exit 1); plain
  OSError means an actual I/O failure (CLI exit 2).
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ortwin.metrics import APResult, BoundaryErrorStats, EvalReport, GtSegment
from ortwin.segments import DetectionSegment
from ortwin.trial import EventSegment, TrialRecording
from ortwin.vocab import EVENT_CLASSES, event_id, event_name

MAGIC_PARAMS = b"SOR1"


class ValidationError(ValueError):
    """Malformed file content or fields that violate a format contract."""


# -- PGM ---------------------------------------------------------------------


def write_pgm(path: Path, grid: np.ndarray, maxval: int) -> None:
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValidationError(f"PGM grid must be 2-D, got shape {grid.shape}")
    if not 0 < maxval < 65536:
        raise ValidationError(f"PGM maxval out of range: {maxval}")
    if grid.size and (int(grid.min()) < 0 or int(grid.max()) > maxval):
        raise ValidationError(
            f"PGM sample out of range 0..{maxval}: min {grid.min()}, max {grid.max()}"
        )
    h, w = grid.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    if maxval < 256:
        raster = grid.astype(np.uint8).tobytes()
    else:
        raster = grid.astype(">u2").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(raster)


def read_pgm(path: Path) -> tuple[np.ndarray, int]:
    """Parse a binary PGM; returns (grid, maxval). Grid dtype is uint8 for
    maxval < 256, else uint16 (samples decoded big-endian)."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 2 or blob[:2] != b"P5":
        raise ValidationError(f"{path}: not a binary PGM (bad magic)")
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # skip whitespace and '#' comments between header tokens
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos] == ord("#"):
            nl = blob.find(b"\n", pos)
            if nl < 0:
                raise ValidationError(f"{path}: unterminated comment in header")
            pos = nl + 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        token = blob[start:pos]
        if not token.isdigit():
            raise ValidationError(f"{path}: malformed header token {token!r}")
        fields.append(int(token))
    if pos >= len(blob) or not blob[pos : pos + 1].isspace():
        raise ValidationError(f"{path}: missing whitespace after maxval")
    pos += 1
    w, h, maxval = fields
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ValidationError(f"{path}: invalid dimensions/maxval {w}x{h}/{maxval}")
    bps = 1 if maxval < 256 else 2
    need = w * h * bps
    raster = blob[pos:]
    if len(raster) < need:
        raise ValidationError(f"{path}: truncated raster, need {need} bytes, have {len(raster)}")
    if len(raster) > need:
        raise ValidationError(f"{path}: {len(raster) - need} trailing bytes after raster")
    if bps == 1:
        grid = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    else:
        grid = np.frombuffer(raster, dtype=">u2").astype(np.uint16).reshape(h, w)
    if grid.size and int(grid.max()) > maxval:
        raise ValidationError(f"{path}: sample {int(grid.max())} exceeds maxval {maxval}")
    return grid.copy(), maxval


# -- JSONL records -------------------------------------------------------------


def _strict_obj(obj: dict, fields: dict[str, type | tuple], where: str) -> None:
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(fields)
    if unknown:
        raise ValidationError(f"{where}: unknown fields {sorted(unknown)}")
    missing = set(fields) - set(obj)
    if missing:
        raise ValidationError(f"{where}: missing fields {sorted(missing)}")
    for k, ty in fields.items():
        if not isinstance(obj[k], ty) or isinstance(obj[k], bool):
            raise ValidationError(f"{where}: field {k!r} has wrong type {type(obj[k]).__name__}")


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append((lineno, json.loads(line)))
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
    return out


def write_events(path: Path, events: list[EventSegment]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ev in events:
            rec = {"class": event_name(ev.class_id), "start_s": ev.start_s, "end_s": ev.end_s}
            f.write(json.dumps(rec) + "\n")


def read_events(path: Path) -> list[EventSegment]:
    events = []
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        _strict_obj(obj, {"class": str, "start_s": (int, float), "end_s": (int, float)}, where)
        if obj["class"] not in EVENT_CLASSES:
            raise ValidationError(f"{where}: unknown event class {obj['class']!r}")
        events.append(
            EventSegment(
                class_id=event_id(obj["class"]),
                start_s=float(obj["start_s"]),
                end_s=float(obj["end_s"]),
            )
        )
    return events


def write_predictions(path: Path, dets: list[DetectionSegment]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in dets:
            rec = {
                "trial": d.trial_id,
                "class": event_name(d.class_id),
                "start_s": d.start_s,
                "end_s": d.end_s,
                "score": d.score,
            }
            f.write(json.dumps(rec) + "\n")


def read_predictions(path: Path) -> list[DetectionSegment]:
    dets = []
    spec = {
        "trial": int,
        "class": str,
        "start_s": (int, float),
        "end_s": (int, float),
        "score": (int, float),
    }
    for lineno, obj in _read_jsonl(path):
        where = f"{path}:{lineno}"
        _strict_obj(obj, spec, where)
        if obj["class"] not in EVENT_CLASSES:
            raise ValidationError(f"{where}: unknown event class {obj['class']!r}")
        if not 0.0 <= float(obj["score"]) <= 1.0:
            raise ValidationError(f"{where}: score {obj['score']} outside [0, 1]")
        dets.append(
            DetectionSegment(
                class_id=event_id(obj["class"]),
                start_s=float(obj["start_s"]),
                end_s=float(obj["end_s"]),
                score=float(obj["score"]),
                trial_id=int(obj["trial"]),
            )
        )
    return dets


# -- trial directories ---------------------------------------------------------


def trial_dir_name(trial_id: int) -> str:
    return f"trial_{trial_id:04d}"


def _frame_name(k: int) -> str:
    return f"frame_{k:06d}.pgm"


def write_trial(rec: TrialRecording, root: Path) -> Path:
    """Write one trial directory atomically (temp dir + rename)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if rec.masks.size and int(rec.masks.max()) > 254:
        raise ValidationError(f"mask class id {int(rec.masks.max())} > 254")
    depth_codes = np.round(rec.depth / rec.depth_scale)
    if depth_codes.size and (depth_codes.min() < 0 or depth_codes.max() > 65535):
        raise ValidationError("depth exceeds the 16-bit encodable range")
    final = root / trial_dir_name(rec.trial_id)
    tmp = Path(tempfile.mkdtemp(prefix=f".tmp_{trial_dir_name(rec.trial_id)}_", dir=root))
    try:
        (tmp / "masks").mkdir()
        (tmp / "depth").mkdir()
        for k in range(rec.n_frames):
            write_pgm(tmp / "masks" / _frame_name(k), rec.masks[k], 255)
            write_pgm(tmp / "depth" / _frame_name(k), depth_codes[k].astype(np.uint16), 65535)
        meta = {
            "trial_id": rec.trial_id,
            "room_id": rec.room_id,
            "fps": rec.fps,
            "width": rec.width,
            "height": rec.height,
            "depth_scale": rec.depth_scale,
            "seed": rec.seed,
            "n_frames": rec.n_frames,
        }
        with open(tmp / "meta.json", "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=1)
            f.write("\n")
        write_events(tmp / "events.jsonl", rec.events)
        if final.exists():
            shutil.rmtree(final)
        os.rename(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


_META_FIELDS = {
    "trial_id": int,
    "room_id": int,
    "fps": (int, float),
    "width": int,
    "height": int,
    "depth_scale": (int, float),
    "seed": int,
    "n_frames": int,
}


def read_trial(path: Path) -> TrialRecording:
    path = Path(path)
    meta_path = path / "meta.json"
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{meta_path}: invalid JSON ({e.msg})") from None
    _strict_obj(meta, _META_FIELDS, str(meta_path))
    n, h, w = meta["n_frames"], meta["height"], meta["width"]
    masks = np.zeros((n, h, w), dtype=np.uint8)
    depth = np.zeros((n, h, w), dtype=np.float64)
    scale = float(meta["depth_scale"])
    for k in range(n):
        m, m_maxval = read_pgm(path / "masks" / _frame_name(k))
        if m_maxval != 255 or m.dtype != np.uint8:
            raise ValidationError(f"{path}: mask frame {k} is not an 8-bit PGM")
        d, d_maxval = read_pgm(path / "depth" / _frame_name(k))
        if d_maxval != 65535:
            raise ValidationError(f"{path}: depth frame {k} is not a 16-bit PGM")
        if m.shape != (h, w) or d.shape != (h, w):
            raise ValidationError(f"{path}: frame {k} shape differs from meta.json")
        masks[k] = m
        depth[k] = d.astype(np.float64) * scale
    events = read_events(path / "events.jsonl")
    return TrialRecording(
        trial_id=meta["trial_id"],
        room_id=meta["room_id"],
        fps=float(meta["fps"]),
        masks=masks,
        depth=depth,
        events=events,
        seed=meta["seed"],
        depth_scale=scale,
    )


# -- dataset manifest ------------------------------------------------------------


@dataclass
class DatasetManifest:
    n_trials: int
    n_rooms: int
    base_seed: int
    fps: float
    height: int
    width: int
    splits: dict[str, list[int]] = field(default_factory=dict)

    def trial_ids(self, split: str | None) -> list[int]:
        if split is None or split == "all":
            return list(range(self.n_trials))
        if split not in self.splits:
            raise ValidationError(f"unknown split {split!r}; have {sorted(self.splits)}")
        return list(self.splits[split])


def write_manifest(path: Path, m: DatasetManifest) -> None:
    doc = {
        "n_trials": m.n_trials,
        "n_rooms": m.n_rooms,
        "base_seed": m.base_seed,
        "fps": m.fps,
        "height": m.height,
        "width": m.width,
        "splits": m.splits,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def read_manifest(path: Path) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e.msg})") from None
    fields = {
        "n_trials": int,
        "n_rooms": int,
        "base_seed": int,
        "fps": (int, float),
        "height": int,
        "width": int,
        "splits": dict,
    }
    _strict_obj(doc, fields, str(path))
    splits = {}
    for name, ids in doc["splits"].items():
        if not isinstance(ids, list) or not all(
            isinstance(i, int) and not isinstance(i, bool) for i in ids
        ):
            raise ValidationError(f"{path}: split {name!r} must be a list of trial ids")
        splits[name] = list(ids)
    return DatasetManifest(
        n_trials=doc["n_trials"],
        n_rooms=doc["n_rooms"],
        base_seed=doc["base_seed"],
        fps=float(doc["fps"]),
        height=doc["height"],
        width=doc["width"],
        splits=splits,
    )


def dataset_gts(root: Path, trial_ids: list[int]) -> list[GtSegment]:
    """Flatten ground-truth events of the listed trials for evaluation."""
    gts = []
    for tid in trial_ids:
        events = read_events(Path(root) / trial_dir_name(tid) / "events.jsonl")
        gts.extend(
            GtSegment(trial_id=tid, class_id=e.class_id, start_s=e.start_s, end_s=e.end_s)
            for e in events
        )
    return gts


# -- parameter container -----------------------------------------------------------


def save_params(path: Path, params: dict[str, np.ndarray]) -> None:
    """Binary container: magic, little-endian u32 count, then per entry a
    u16 name length, UTF-8 name, u8 rank, rank u32 extents, and float32
    little-endian values in row-major order."""
    with open(path, "wb") as f:
        f.write(MAGIC_PARAMS)
        f.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            arr = np.asarray(arr)
            nb = name.encode("utf-8")
            if len(nb) > 0xFFFF:
                raise ValidationError(f"parameter name too long: {name[:32]!r}...")
            if arr.ndim > 255:
                raise ValidationError(f"parameter rank {arr.ndim} too large for {name!r}")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for extent in arr.shape:
                f.write(struct.pack("<I", extent))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_params(path: Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC_PARAMS:
        raise ValidationError(f"{path}: bad magic {blob[:4]!r}")
    pos = 4

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise ValidationError(f"{path}: truncated while reading {what}")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4, "entry count"))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        if name in params:
            raise ValidationError(f"{path}: duplicate parameter {name!r}")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = tuple(
            struct.unpack("<I", take(4, f"extent of {name!r}"))[0] for _ in range(rank)
        )
        size = 1
        for extent in shape:
            size *= extent
        raw = take(4 * size, f"values of {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(blob):
        raise ValidationError(f"{path}: {len(blob) - pos} trailing bytes")
    return params


# -- evaluation report -----------------------------------------------------------


def write_report(path: Path, report: EvalReport) -> None:
    doc = {
        "thresholds": list(report.thresholds),
        "avg_map": report.avg_map,
        "map_per_threshold": [
            {"threshold": t, "map": report.map_per_threshold[t]} for t in report.thresholds
        ],
        "per_class": [
            {
                "class": event_name(c),
                "threshold": thr,
                "ap": r.ap,
                "n_gt": r.n_gt,
                "n_tp": r.n_tp,
                "n_fp": r.n_fp,
            }
            for c in sorted(report.per_class)
            for thr, r in sorted(report.per_class[c].items())
        ],
        "boundary": [
            {
                "class": event_name(c),
                "start_mean_s": b.start_mean_s,
                "start_std_s": b.start_std_s,
                "end_mean_s": b.end_mean_s,
                "end_std_s": b.end_std_s,
                "matched": b.matched,
                "missed": b.missed,
            }
            for c, b in sorted(report.boundary.items())
        ],
        "excluded_classes": [event_name(c) for c in report.excluded_classes],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def read_report(path: Path) -> EvalReport:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid JSON ({e.msg})") from None
    top = {
        "thresholds": list,
        "avg_map": (int, float),
        "map_per_threshold": list,
        "per_class": list,
        "boundary": list,
        "excluded_classes": list,
    }
    _strict_obj(doc, top, str(path))
    thresholds = tuple(float(t) for t in doc["thresholds"])
    mpt = {}
    for row in doc["map_per_threshold"]:
        _strict_obj(row, {"threshold": (int, float), "map": (int, float)}, str(path))
        mpt[float(row["threshold"])] = float(row["map"])
    per_class: dict[int, dict[float, APResult]] = {}
    for row in doc["per_class"]:
        _strict_obj(
            row,
            {
                "class": str,
                "threshold": (int, float),
                "ap": (int, float),
                "n_gt": int,
                "n_tp": int,
                "n_fp": int,
            },
            str(path),
        )
        cid = event_id(row["class"])
        per_class.setdefault(cid, {})[float(row["threshold"])] = APResult(
            cid, float(row["threshold"]), float(row["ap"]), row["n_gt"], row["n_tp"], row["n_fp"]
        )
    boundary = {}
    for row in doc["boundary"]:
        _strict_obj(
            row,
            {
                "class": str,
                "start_mean_s": (int, float),
                "start_std_s": (int, float),
                "end_mean_s": (int, float),
                "end_std_s": (int, float),
                "matched": int,
                "missed": int,
            },
            str(path),
        )
        cid = event_id(row["class"])
        boundary[cid] = BoundaryErrorStats(
            cid,
            float(row["start_mean_s"]),
            float(row["start_std_s"]),
            float(row["end_mean_s"]),
            float(row["end_std_s"]),
            row["matched"],
            row["missed"],
        )
    return EvalReport(
        thresholds=thresholds,
        per_class=per_class,
        map_per_threshold=mpt,
        avg_map=float(doc["avg_map"]),
        boundary=boundary,
        excluded_classes=tuple(event_id(n) for n in doc["excluded_classes"]),
    )
