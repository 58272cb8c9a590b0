"""Command-line surface: simulate, train, predict, eval, plot.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error. All
randomness comes from --seed flags or config files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from ortwin.metrics import GtSegment, format_percent, map_at
from ortwin.model import ModelConfig, load_model, predict_trial
from ortwin.segments import ExtractionConfig, extract_segments
from ortwin.sim import DatasetConfig, PhaseRange, ScenarioScript, generate_dataset
from ortwin.storage import (
    ValidationError,
    dataset_gts,
    read_manifest,
    read_predictions,
    read_trial,
    trial_dir_name,
    write_predictions,
    write_report,
)
from ortwin.timeline import render_timeline_svg
from ortwin.train import train as run_train
from ortwin.vocab import EVENT_CLASSES


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is
    # usage on stderr and exit 1, so parse errors become exceptions
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _load_config(path: str | None, cls):
    """Build a config dataclass from a strict JSON object file."""
    if path is None:
        return cls()
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{p}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ValidationError(f"{p}: config must be a JSON object")
    allowed = {f.name for f in dataclass_fields(cls)}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"{p}: unknown config fields {sorted(unknown)}")
    if cls is DatasetConfig and "scenario" in raw:
        raw = dict(raw)
        raw["scenario"] = _parse_scenario(raw["scenario"], p)
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{p}: {e}") from e


def _parse_scenario(obj, path: Path) -> ScenarioScript:
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: scenario must be a JSON object")
    allowed = {f.name for f in dataclass_fields(ScenarioScript)}
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"{path}: unknown scenario fields {sorted(unknown)}")
    kwargs = {}
    for name, val in obj.items():
        if name == "busy":
            if not isinstance(val, bool):
                raise ValidationError(f"{path}: scenario.busy must be a boolean")
            kwargs[name] = val
        else:
            if not (isinstance(val, list) and len(val) == 2):
                raise ValidationError(f"{path}: scenario.{name} must be [lo, hi]")
            kwargs[name] = PhaseRange(int(val[0]), int(val[1]))
    return ScenarioScript(**kwargs)


def _split_trials(root: Path, split: str) -> list[int]:
    manifest = read_manifest(root / "manifest.json")
    return manifest.trial_ids(split)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, DatasetConfig)
    if args.seed is not None:
        cfg = DatasetConfig(
            **{**{f.name: getattr(cfg, f.name) for f in dataclass_fields(DatasetConfig)}, "base_seed": args.seed}
        )
    out = Path(args.out)
    generate_dataset(cfg, out, log=print)
    print(f"wrote {cfg.n_trials} trials to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args.model, ModelConfig)
    overrides = {}
    if args.streams is not None:
        overrides["streams"] = args.streams
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        base = {f.name: getattr(cfg, f.name) for f in dataclass_fields(ModelConfig)}
        cfg = ModelConfig(**{**base, **overrides})
    run_train(Path(args.data), cfg, log=print, out_path=Path(args.out))
    return 0


def _cmd_predict(args) -> int:
    params, cfg = load_model(Path(args.params))
    root = Path(args.data)
    extract = ExtractionConfig()
    dets = []
    for tid in _split_trials(root, args.split):
        trial = read_trial(root / trial_dir_name(tid))
        probs = predict_trial(trial.masks, trial.depth, params, cfg)
        dets.extend(extract_segments(probs, extract, trial.fps, trial_id=tid))
    write_predictions(Path(args.out), dets)
    print(f"wrote {len(dets)} detections for {args.split} split to {args.out}")
    return 0


def _parse_thresholds(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(part) for part in text.split(","))
    except ValueError as e:
        raise ValidationError(f"bad thresholds {text!r}") from e
    if not vals or any(not 0.0 < v <= 1.0 for v in vals):
        raise ValidationError(f"thresholds must lie in (0, 1]: {text!r}")
    return vals


def _cmd_eval(args) -> int:
    root = Path(args.gt)
    trial_ids = _split_trials(root, args.split)
    gts = dataset_gts(root, trial_ids)
    dets = read_predictions(Path(args.preds))
    known = set(trial_ids)
    for d in dets:
        if d.trial_id not in known:
            raise ValidationError(
                f"prediction for trial {d.trial_id} outside the {args.split} split"
            )
    thresholds = _parse_thresholds(args.thresholds)
    report = map_at(dets, gts, thresholds)
    write_report(Path(args.out), report)
    for thr in report.thresholds:
        print(f"mAP@{thr:g}: {format_percent(report.map_per_threshold[thr])}")
    print(f"avg mAP: {format_percent(report.avg_map)}")
    for c in sorted(report.boundary):
        b = report.boundary[c]
        print(
            f"{EVENT_CLASSES[c]}: start err {b.start_mean_s:.2f}s"
            f" +- {b.start_std_s:.2f}, end err {b.end_mean_s:.2f}s"
            f" +- {b.end_std_s:.2f} ({b.matched} matched, {b.missed} missed)"
        )
    print(f"wrote report to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    root = Path(args.gt)
    trial = read_trial(root / trial_dir_name(args.trial))
    gts = [
        GtSegment(trial.trial_id, ev.class_id, ev.start_s, ev.end_s)
        for ev in trial.events
    ]
    dets = [d for d in read_predictions(Path(args.preds)) if d.trial_id == args.trial]
    meta = {"trial_id": trial.trial_id, "n_frames": trial.n_frames, "fps": trial.fps}
    svg = render_timeline_svg(gts, dets, meta)
    Path(args.out).write_text(svg)
    print(f"wrote timeline for trial {args.trial} to {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="ortwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", help="dataset config JSON")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", help="model config JSON")
    p.add_argument("--streams", choices=["mask", "depth", "both"], help="input ablation")
    p.add_argument("--out", required=True, help="output parameter file")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("predict", help="run detection over a split")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--params", required=True, help="trained parameter file")
    p.add_argument("--out", required=True, help="output predictions JSONL")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--gt", required=True, help="dataset directory with ground truth")
    p.add_argument("--preds", required=True, help="predictions JSONL")
    p.add_argument("--thresholds", default="0.25,0.5,0.75", help="comma-separated tIoU thresholds")
    p.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("plot", help="render one trial's event timeline SVG")
    p.add_argument("--gt", required=True, help="dataset directory with ground truth")
    p.add_argument("--preds", required=True, help="predictions JSONL")
    p.add_argument("--trial", required=True, type=int, help="trial id to plot")
    p.add_argument("--out", required=True, help="output SVG path")
    p.set_defaults(fn=_cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError:
        return 1
    except ValueError as e:  # includes ValidationError
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
