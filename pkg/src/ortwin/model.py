"""Two-stream cross-attention event detector.

Per frame, each stream (semantic mask one-hot, normalized depth) is cut
into non-overlapping spatial patches, linearly projected, and mean-pooled
into one d_model vector. A window of T consecutive frame vectors around
each center frame passes one self-attention block (sinusoidal within-
window positions are added to the attention inputs only; the residual
carries the raw tokens) and is mean-pooled into the frame's stream
embedding. A sequence of L frame embeddings per stream is then fused by
bi-directional cross-attention (each stream queries the other, sequence
positions added to the attention inputs), each direction followed by a
residual layer-norm MLP; the two fused sequences are concatenated and a
linear head emits per-frame, per-class logits with sigmoid semantics.

Ablations replace the absent stream's embeddings with zeros; that
stream's patch embedder and encoder parameters are never created, so the
parameter name set differs per ablation while fusion and head stay
identical.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ortwin import autodiff as ad
from ortwin.autodiff import Tensor
from ortwin.rng import Rng
from ortwin.storage import ValidationError, load_params, save_params
from ortwin.trial import EventSegment
from ortwin.vocab import N_EVENT_CLASSES, N_MASK_VALUES

STREAM_CODES = {"mask": 0.0, "depth": 1.0, "both": 2.0}


@dataclass(frozen=True)
class ModelConfig:
    window: int = 9  # frames per temporal window, odd
    seq_len: int = 32  # frame embeddings fused jointly
    d_model: int = 64
    n_heads: int = 4
    n_classes: int = N_EVENT_CLASSES
    mask_channels: int = N_MASK_VALUES
    patch: int = 8  # spatial patch extent, divides H and W
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 4
    seed: int = 0
    streams: str = "both"  # mask | depth | both
    depth_max_m: float = 20.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd >= 1, got {self.window}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if self.seq_len < 1:
            raise ValueError(f"seq_len must be >= 1, got {self.seq_len}")
        if self.streams not in STREAM_CODES:
            raise ValueError(f"streams must be one of {sorted(STREAM_CODES)}")

    @property
    def mlp_hidden(self) -> int:
        return 2 * self.d_model

    def patch_dim(self, stream: str) -> int:
        ch = self.mask_channels if stream == "mask" else 1
        return ch * self.patch * self.patch

    def uses(self, stream: str) -> bool:
        return self.streams in (stream, "both")


# -- input preparation (plain numpy, outside the graph) -------------------------


def one_hot_mask(mask: np.ndarray, n: int = N_MASK_VALUES) -> np.ndarray:
    """Class-id grid(s) -> one-hot channels; output (..., n, H, W)."""
    mask = np.asarray(mask)
    if mask.size and (int(mask.min()) < 0 or int(mask.max()) >= n):
        raise ValueError(f"mask values outside 0..{n - 1}")
    hot = np.eye(n, dtype=np.float64)[mask]  # (..., H, W, n)
    return np.moveaxis(hot, -1, -3)


def normalize_depth(depth: np.ndarray, d_max: float = 20.0) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.size and depth.min() < 0.0:
        raise ValueError("negative depth")
    if not np.all(np.isfinite(depth)):
        raise ValueError("non-finite depth")
    return np.clip(depth / d_max, 0.0, 1.0)


def _to_patches(grids: np.ndarray, patch: int) -> np.ndarray:
    """(F, ch, H, W) -> (F, n_patches, ch*patch*patch); patch vectors are
    (channel, row, col) flattened, patches scan row-major."""
    f, ch, h, w = grids.shape
    if h % patch or w % patch:
        raise ValueError(f"grid {h}x{w} not divisible by patch {patch}")
    g = grids.reshape(f, ch, h // patch, patch, w // patch, patch)
    g = g.transpose(0, 2, 4, 1, 3, 5)
    return np.ascontiguousarray(g.reshape(f, (h // patch) * (w // patch), ch * patch * patch))


def mask_patches(masks: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    return _to_patches(one_hot_mask(masks, cfg.mask_channels), cfg.patch)


def depth_patches(depth: np.ndarray, cfg: ModelConfig) -> np.ndarray:
    return _to_patches(normalize_depth(depth, cfg.depth_max_m)[:, None], cfg.patch)


def sin_positions(n: int, d: int) -> np.ndarray:
    """Standard sinusoidal position table, shape (n, d)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    angles = pos / np.power(10000.0, (i // 2) * 2.0 / d)
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    return table


@dataclass(frozen=True)
class DigitalTwinWindow:
    mask_hot: np.ndarray  # (T, mask_channels, H, W)
    depth_norm: np.ndarray  # (T, 1, H, W)
    center: int


def build_windows(
    masks: np.ndarray, depth: np.ndarray, cfg: ModelConfig
) -> list[DigitalTwinWindow]:
    """One window per frame, edge frames replicated at trial boundaries."""
    if masks.shape[0] == 0:
        raise ValueError("empty trial")
    f = masks.shape[0]
    half = cfg.window // 2
    hot = one_hot_mask(masks, cfg.mask_channels)
    dn = normalize_depth(depth, cfg.depth_max_m)[:, None]
    out = []
    for k in range(f):
        idx = np.clip(np.arange(k - half, k + half + 1), 0, f - 1)
        out.append(DigitalTwinWindow(mask_hot=hot[idx], depth_norm=dn[idx], center=k))
    return out


# -- parameters -----------------------------------------------------------------


def _glorot(rng: Rng, fan_in: int, fan_out: int) -> Tensor:
    limit = float(np.sqrt(6.0 / (fan_in + fan_out)))
    flat = np.array(rng.floats(fan_in * fan_out), dtype=np.float64)
    data = (2.0 * flat - 1.0) * limit
    return Tensor(data.reshape(fan_in, fan_out), requires_grad=True)


def _zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(*shape: int) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


def _block_params(params: dict[str, Tensor], prefix: str, rng: Rng, cfg: ModelConfig) -> None:
    d, h = cfg.d_model, cfg.mlp_hidden
    for name in ("wq", "wk", "wv", "wo"):
        params[f"{prefix}.attn.{name}"] = _glorot(rng, d, d)
    # no key bias: a constant shift of every key adds the same value to all
    # scores in a row, which the softmax cancels, so it could never train
    for name in ("bq", "bv", "bo"):
        params[f"{prefix}.attn.{name}"] = _zeros(d)
    params[f"{prefix}.mlp.norm_g"] = _ones(d)
    params[f"{prefix}.mlp.norm_b"] = _zeros(d)
    params[f"{prefix}.mlp.w1"] = _glorot(rng, d, h)
    params[f"{prefix}.mlp.b1"] = _zeros(h)
    params[f"{prefix}.mlp.w2"] = _glorot(rng, h, d)
    params[f"{prefix}.mlp.b2"] = _zeros(d)


def init_params(cfg: ModelConfig, rng: Rng) -> dict[str, Tensor]:
    """Create all trainable tensors. Creation order is fixed, so identical
    seeds give identical initializations."""
    params: dict[str, Tensor] = {}
    for stream in ("mask", "depth"):
        if not cfg.uses(stream):
            continue
        params[f"embed.{stream}.w"] = _glorot(rng, cfg.patch_dim(stream), cfg.d_model)
        params[f"embed.{stream}.b"] = _zeros(cfg.d_model)
        _block_params(params, f"enc.{stream}", rng, cfg)
    for stream in ("mask", "depth"):
        _block_params(params, f"fuse.{stream}", rng, cfg)
    params["head.w"] = _glorot(rng, 2 * cfg.d_model, cfg.n_classes)
    params["head.b"] = _zeros(cfg.n_classes)
    return params


def param_count(params: dict[str, Tensor]) -> int:
    return sum(p.data.size for p in params.values())


# -- network pieces ---------------------------------------------------------------


def _heads(x: Tensor, n_heads: int) -> list[Tensor]:
    d = x.shape[-1]
    dh = d // n_heads
    return [x[..., i * dh : (i + 1) * dh] for i in range(n_heads)]


def _attend(q_in: Tensor, kv_in: Tensor, params: dict[str, Tensor], prefix: str, n_heads: int) -> Tensor:
    """Multi-head attention; q_in (..., Lq, d), kv_in (..., Lk, d)."""
    p = params
    q = ad.matmul(q_in, p[f"{prefix}.wq"]) + p[f"{prefix}.bq"]
    k = ad.matmul(kv_in, p[f"{prefix}.wk"])
    v = ad.matmul(kv_in, p[f"{prefix}.wv"]) + p[f"{prefix}.bv"]
    dh = q.shape[-1] // n_heads
    scale = 1.0 / float(np.sqrt(dh))
    ctx_heads = []
    for qh, kh, vh in zip(_heads(q, n_heads), _heads(k, n_heads), _heads(v, n_heads)):
        axes = tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2)
        scores = ad.matmul(qh, ad.transpose(kh, axes)) * scale
        att = ad.softmax(scores, axis=-1)
        ctx_heads.append(ad.matmul(att, vh))
    ctx = ad.concat(ctx_heads, axis=-1)
    return ad.matmul(ctx, p[f"{prefix}.wo"]) + p[f"{prefix}.bo"]


def _mlp_res(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """x + MLP(LN(x)) with a gelu hidden layer."""
    h = ad.layer_norm(x, params[f"{prefix}.norm_g"], params[f"{prefix}.norm_b"])
    h = ad.gelu(ad.matmul(h, params[f"{prefix}.w1"]) + params[f"{prefix}.b1"])
    h = ad.matmul(h, params[f"{prefix}.w2"]) + params[f"{prefix}.b2"]
    return x + h


def embed_frames(pooled: Tensor | np.ndarray, params: dict[str, Tensor], stream: str) -> Tensor:
    """Patch-pooled frame vectors (..., patch_dim) -> (..., d_model).

    Projecting each patch then averaging equals averaging the patches then
    projecting once (both maps are affine), so callers pool patches before
    the projection; per-window code paths keep the pooling in-graph."""
    x = pooled if isinstance(pooled, Tensor) else Tensor(pooled)
    return ad.matmul(x, params[f"embed.{stream}.w"]) + params[f"embed.{stream}.b"]


def encode_stream(
    feats: Tensor, params: dict[str, Tensor], stream: str, cfg: ModelConfig, n_tokens: int
) -> Tensor:
    """Frame vectors (..., n_tokens + window - 1, d) -> (..., n_tokens, d).

    Row j of window k is frame vector k + j; positions are within-window
    and enter only the attention input."""
    t = cfg.window
    cols = [feats[..., j : j + n_tokens, None, :] for j in range(t)]
    windows = ad.concat(cols, axis=-2)  # (..., n_tokens, T, d)
    pos = Tensor(sin_positions(t, cfg.d_model))
    att_in = windows + pos
    a = windows + _attend(att_in, att_in, params, f"enc.{stream}.attn", cfg.n_heads)
    y = _mlp_res(a, params, f"enc.{stream}.mlp")
    return ad.mean(y, axis=-2)


def bimodal_fuse(
    e_mask: Tensor,
    e_depth: Tensor,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    seq_pos: np.ndarray | None = None,
) -> Tensor:
    """Cross-attend each stream over the other; concat the fused rows."""
    if e_mask.shape != e_depth.shape:
        raise ad.ShapeError(
            f"stream embedding shapes differ: {e_mask.shape} vs {e_depth.shape}"
        )
    n = e_mask.shape[-2]
    pos = Tensor(sin_positions(n, cfg.d_model) if seq_pos is None else seq_pos)
    qm, qd = e_mask + pos, e_depth + pos
    a_m = e_mask + _attend(qm, qd, params, "fuse.mask.attn", cfg.n_heads)
    y_m = _mlp_res(a_m, params, "fuse.mask.mlp")
    a_d = e_depth + _attend(qd, qm, params, "fuse.depth.attn", cfg.n_heads)
    y_d = _mlp_res(a_d, params, "fuse.depth.mlp")
    return ad.concat([y_m, y_d], axis=-1)


def classify(fused: Tensor, params: dict[str, Tensor]) -> Tensor:
    return ad.matmul(fused, params["head.w"]) + params["head.b"]


def forward_chunk(
    mpooled: np.ndarray | None,
    dpooled: np.ndarray | None,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    n_tokens: int,
) -> Tensor:
    """Pooled patch vectors (..., n_tokens + window - 1, patch_dim) ->
    (..., n_tokens, n_classes) logits; leading axes batch whole chunks.
    A disabled stream passes None and contributes zero embeddings."""
    present = mpooled if mpooled is not None else dpooled
    if present is None:
        raise ad.ShapeError("at least one stream input required")
    lead = present.shape[:-2]
    streams = {}
    for stream, pooled in (("mask", mpooled), ("depth", dpooled)):
        if cfg.uses(stream):
            if pooled is None:
                raise ad.ShapeError(f"configuration uses the {stream} stream but got no input")
            feats = embed_frames(pooled, params, stream)
            streams[stream] = encode_stream(feats, params, stream, cfg, n_tokens)
        else:
            streams[stream] = Tensor(np.zeros((*lead, n_tokens, cfg.d_model)))
    fused = bimodal_fuse(streams["mask"], streams["depth"], params, cfg)
    return classify(fused, params)


def encode_window(window: DigitalTwinWindow, params: dict[str, Tensor], stream: str, cfg: ModelConfig) -> Tensor:
    """Contract form: one window's stream half -> one d_model vector, with
    explicit per-patch projection kept inside the graph."""
    grids = window.mask_hot if stream == "mask" else window.depth_norm
    patches = Tensor(_to_patches(np.asarray(grids, dtype=np.float64), cfg.patch))
    feats = embed_frames(ad.mean(patches, axis=-2), params, stream)
    return encode_stream(feats, params, stream, cfg, n_tokens=1)[0]


# -- trial-level inference ---------------------------------------------------------


def chunk_starts(n_frames: int, seq_len: int) -> list[tuple[int, int]]:
    """(start, length) chunks tiling a trial with stride seq_len; the last
    chunk is right-aligned when frames do not divide evenly."""
    if n_frames < 1:
        raise ValueError("trial must have at least one frame")
    if n_frames <= seq_len:
        return [(0, n_frames)]
    starts = [(s, seq_len) for s in range(0, n_frames - seq_len + 1, seq_len)]
    if starts[-1][0] + seq_len < n_frames:
        starts.append((n_frames - seq_len, seq_len))
    return starts


def pooled_inputs(
    masks: np.ndarray, depth: np.ndarray, cfg: ModelConfig, slab: int = 64
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Patch-averaged vectors (F, patch_dim) per in-use stream for a whole
    trial; pre-pooling is exact (see embed_frames). Computed in frame slabs
    so the one-hot expansion never holds more than `slab` frames."""
    f = masks.shape[0]
    mp = np.empty((f, cfg.patch_dim("mask"))) if cfg.uses("mask") else None
    dp = np.empty((f, cfg.patch_dim("depth"))) if cfg.uses("depth") else None
    for i in range(0, f, slab):
        j = min(i + slab, f)
        if mp is not None:
            mp[i:j] = mask_patches(masks[i:j], cfg).mean(axis=1)
        if dp is not None:
            dp[i:j] = depth_patches(depth[i:j], cfg).mean(axis=1)
    return mp, dp


def chunk_rows(pooled: np.ndarray, start: int, length: int, window: int) -> np.ndarray:
    """One chunk's rows [start - half, start + length + half), clamped at
    trial edges (edge frames replicate)."""
    f = pooled.shape[0]
    half = window // 2
    idx = np.clip(np.arange(start - half, start + length + half), 0, f - 1)
    return pooled[idx]


def chunk_inputs(
    masks: np.ndarray,
    depth: np.ndarray,
    start: int,
    length: int,
    cfg: ModelConfig,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Pooled patch vectors for one chunk cut straight from raw grids."""
    mp, dp = pooled_inputs(masks, depth, cfg)
    return (
        chunk_rows(mp, start, length, cfg.window) if mp is not None else None,
        chunk_rows(dp, start, length, cfg.window) if dp is not None else None,
    )


def predict_trial(
    masks: np.ndarray,
    depth: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
) -> np.ndarray:
    """Per-frame class probabilities, shape (n_frames, n_classes).

    All chunks of a trial share one length (the last is right-aligned), so
    they run as one batched forward pass."""
    f = masks.shape[0]
    starts = chunk_starts(f, cfg.seq_len)
    length = starts[0][1]
    mp, dp = pooled_inputs(masks, depth, cfg)
    mb = (
        np.stack([chunk_rows(mp, s, length, cfg.window) for s, _ in starts])
        if mp is not None
        else None
    )
    db = (
        np.stack([chunk_rows(dp, s, length, cfg.window) for s, _ in starts])
        if dp is not None
        else None
    )
    probs = np.zeros((f, cfg.n_classes), dtype=np.float64)
    with ad.no_grad():
        logits = forward_chunk(mb, db, params, cfg, length)
        for row, (start, _) in enumerate(starts):
            probs[start : start + length] = ad.sigmoid_np(logits.data[row])
    return np.clip(probs, 1e-12, 1.0 - 1e-12)


def frame_labels(events: list[EventSegment], fps: float, n_frames: int) -> np.ndarray:
    """(n_frames, C) 0/1 targets: frame f is positive for a class iff its
    midpoint time (f + 0.5) / fps falls inside an event of that class."""
    labels = np.zeros((n_frames, N_EVENT_CLASSES), dtype=np.float64)
    mid = (np.arange(n_frames) + 0.5) / fps
    for ev in events:
        hit = (mid >= ev.start_s) & (mid < ev.end_s)
        labels[hit, ev.class_id] = 1.0
    return labels


# -- serialization ------------------------------------------------------------------


_CFG_FIELDS = (
    "window",
    "seq_len",
    "d_model",
    "n_heads",
    "n_classes",
    "mask_channels",
    "patch",
    "streams",
)


def save_model(path: Path, params: dict[str, Tensor], cfg: ModelConfig) -> None:
    """Weights plus the architecture scalars needed to rebuild at load."""
    entries: dict[str, np.ndarray] = {}
    for name in _CFG_FIELDS:
        val = getattr(cfg, name)
        code = STREAM_CODES[val] if name == "streams" else float(val)
        entries[f"cfg.{name}"] = np.asarray(code, dtype=np.float32)
    entries["cfg.depth_max_m"] = np.asarray(cfg.depth_max_m, dtype=np.float32)
    for name, p in params.items():
        entries[name] = p.data.astype(np.float32)
    save_params(path, entries)


def load_model(path: Path) -> tuple[dict[str, Tensor], ModelConfig]:
    entries = load_params(path)
    kwargs = {}
    for name in _CFG_FIELDS:
        key = f"cfg.{name}"
        if key not in entries:
            raise ValidationError(f"{path}: missing architecture entry {key}")
        val = float(entries.pop(key))
        if name == "streams":
            codes = {v: k for k, v in STREAM_CODES.items()}
            if val not in codes:
                raise ValidationError(f"{path}: unknown stream code {val}")
            kwargs[name] = codes[val]
        else:
            kwargs[name] = int(val)
    kwargs["depth_max_m"] = float(entries.pop("cfg.depth_max_m", np.float32(20.0)))
    cfg = ModelConfig(**kwargs)
    params = {
        name: Tensor(arr.astype(np.float64), requires_grad=True)
        for name, arr in entries.items()
    }
    return params, cfg
