"""Training loop: Adam over chunked trials with per-epoch validation.

Trials are tiled into fixed-length frame chunks (the same tiling inference
uses); each epoch visits every chunk once in a seeded shuffled order, in
mini-batches whose loss is the mean of the member chunks' element-mean
binary cross-entropies. Validation reruns detection end to end (predict,
extract segments, score against ground truth) so the logged number is the
deployment metric, not a proxy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ortwin import autodiff as ad
from ortwin.autodiff import NumericsError, Tensor
from ortwin.metrics import GtSegment, map_at
from ortwin.model import (
    ModelConfig,
    chunk_rows,
    chunk_starts,
    forward_chunk,
    frame_labels,
    init_params,
    param_count,
    pooled_inputs,
    predict_trial,
    save_model,
)
from ortwin.optim import Adam
from ortwin.rng import Rng
from ortwin.segments import DetectionSegment, ExtractionConfig, extract_segments
from ortwin.storage import DatasetManifest, dataset_gts, read_manifest, read_trial, trial_dir_name
from ortwin.trial import TrialRecording


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_avg_map: float


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    cfg: ModelConfig
    history: list[EpochStats] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return param_count(self.params)


def load_split(root: Path, manifest: DatasetManifest, split: str) -> list[TrialRecording]:
    return [read_trial(root / trial_dir_name(t)) for t in manifest.trial_ids(split)]


def detect_trials(
    trials: list[TrialRecording],
    params: dict[str, Tensor],
    cfg: ModelConfig,
    extract: ExtractionConfig,
) -> list[DetectionSegment]:
    dets: list[DetectionSegment] = []
    for trial in trials:
        probs = predict_trial(trial.masks, trial.depth, params, cfg)
        dets.extend(extract_segments(probs, extract, trial.fps, trial_id=trial.trial_id))
    return dets


def evaluate_split(
    trials: list[TrialRecording],
    params: dict[str, Tensor],
    cfg: ModelConfig,
    extract: ExtractionConfig,
    thresholds: tuple[float, ...] = (0.25, 0.50, 0.75),
) -> float:
    dets = detect_trials(trials, params, cfg, extract)
    gts = [
        GtSegment(t.trial_id, ev.class_id, ev.start_s, ev.end_s)
        for t in trials
        for ev in t.events
    ]
    return map_at(dets, gts, thresholds).avg_map


def train(
    data_root: Path,
    cfg: ModelConfig,
    log: Callable[[str], None] | None = print,
    out_path: Path | None = None,
    extract: ExtractionConfig | None = None,
) -> TrainResult:
    """Train on the manifest's train split, validating on its val split."""
    root = Path(data_root)
    manifest = read_manifest(root / "manifest.json")
    train_trials = load_split(root, manifest, "train")
    val_trials = load_split(root, manifest, "val")
    if not train_trials:
        raise ValueError(f"{root}: empty train split")
    extract = extract or ExtractionConfig()

    rng = Rng(cfg.seed)
    params = init_params(cfg, rng)
    opt = Adam(params, lr=cfg.lr)

    labels = {t.trial_id: frame_labels(t.events, t.fps, t.n_frames) for t in train_trials}
    pooled = [pooled_inputs(t.masks, t.depth, cfg) for t in train_trials]
    coords = [
        (k, start, length)
        for k, t in enumerate(train_trials)
        for start, length in chunk_starts(t.n_frames, cfg.seq_len)
    ]
    if any(length != cfg.seq_len for _, _, length in coords):
        raise ValueError(
            f"every training trial must have at least seq_len={cfg.seq_len} frames"
        )
    if log:
        log(
            f"training streams={cfg.streams} seed={cfg.seed}: "
            f"{len(train_trials)} trials, {len(coords)} chunks/epoch, "
            f"{param_count(params)} parameters"
        )

    result = TrainResult(params=params, cfg=cfg)
    warmup = min(3, cfg.epochs)
    for epoch in range(1, cfg.epochs + 1):
        # linear warmup then cosine decay to a tenth of the base rate;
        # a flat rate leaves the loss bouncing near convergence
        if epoch <= warmup:
            opt.lr = cfg.lr * epoch / warmup
        else:
            frac = (epoch - warmup) / max(1, cfg.epochs - warmup)
            opt.lr = cfg.lr * (0.1 + 0.45 * (1.0 + np.cos(np.pi * frac)))
        rng.shuffle(coords)
        losses: list[float] = []
        for b0 in range(0, len(coords), cfg.batch_size):
            batch = coords[b0 : b0 + cfg.batch_size]
            opt.zero_grad()
            mstack, dstack, tstack = [], [], []
            for k, start, length in batch:
                mp, dp = pooled[k]
                if mp is not None:
                    mstack.append(chunk_rows(mp, start, length, cfg.window))
                if dp is not None:
                    dstack.append(chunk_rows(dp, start, length, cfg.window))
                tstack.append(labels[train_trials[k].trial_id][start : start + length])
            mb = np.stack(mstack) if mstack else None
            db = np.stack(dstack) if dstack else None
            # element-mean over the whole stack == mean of per-chunk means,
            # since all chunks share one length
            logits = forward_chunk(mb, db, params, cfg, cfg.seq_len)
            loss = ad.bce_with_logits(logits, np.stack(tstack))
            value = loss.item()
            if not np.isfinite(value):
                raise NumericsError(
                    f"epoch {epoch}: non-finite batch loss {value}; "
                    f"batch {batch}, lr={cfg.lr}"
                )
            loss.backward()
            opt.step()
            losses.append(value)
        train_loss = float(np.mean(losses))
        val_map = (
            evaluate_split(val_trials, params, cfg, extract) if val_trials else float("nan")
        )
        result.history.append(EpochStats(epoch, train_loss, val_map))
        if log:
            log(f"epoch {epoch:3d}/{cfg.epochs}  loss {train_loss:.4f}  val avg mAP {100.0 * val_map:6.2f}")

    if out_path is not None:
        save_model(Path(out_path), params, cfg)
        if log:
            log(f"saved parameters to {out_path}")
    return result
