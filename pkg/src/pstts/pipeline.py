"""End-to-end frame pipeline: segment, score, purify, select.

`run` drives an event stream through both stages and returns the per-frame
masks and scores; `run_from_densities` starts from precomputed density
tensors. Both are pure given their inputs, so frames can be fanned out over
a worker pool without affecting results.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .events import DensitySequence, EventStream, bin_density, segment_stream
from .flops import ModelDims
from .spatial import LifParams, StcParams, spatial_stage
from .temporal import (
    FrameSelection,
    RetainedPatches,
    SelectionResult,
    Stage2Scores,
    TtsConfig,
    extract_patches,
    frame_tmr,
    select_temporal,
    token_scores,
)

__all__ = ["PipelineConfig", "run", "run_from_densities", "resolve_threads", "CONFIG_KEYS"]

THREADS_ENV_VAR = "PSTTS_THREADS"

# flat config-file / mapping keys and the PipelineConfig fields they feed
CONFIG_KEYS = (
    "interval_us",
    "frames",
    "bins",
    "patch_size",
    "width",
    "height",
    "tau",
    "v_th",
    "v_reset",
    "radius",
    "sigma_s",
    "sigma_t",
    "stage1_use_stc",
    "aggregation",
    "epsilon",
    "use_stc",
    "use_l2",
    "strategy",
    "fixed_ratio",
    "threads",
    "model_layers",
    "model_dim",
    "model_mlp_ratio",
    "out_dir",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of a run; mirrors the flat config-file keys."""

    interval_us: int = 250_000
    frames: int | None = None  # optional cap on the number of processed windows
    bins: int = 8
    patch_size: int = 16
    width: int | None = None
    height: int | None = None
    lif: LifParams = field(default_factory=LifParams)
    stc: StcParams = field(default_factory=StcParams)
    tts: TtsConfig = field(default_factory=TtsConfig)
    stage1_use_stc: bool = True
    strategy: str = "adaptive_mean"
    fixed_ratio: float | None = None
    threads: int | None = None
    model_layers: int = 12
    model_dim: int = 768
    model_mlp_ratio: float = 4.0
    out_dir: str | None = None

    def __post_init__(self):
        if self.interval_us <= 0:
            raise ValueError(f"interval_us must be positive, got {self.interval_us}")
        if self.frames is not None and self.frames < 1:
            raise ValueError(f"frames cap must be >= 1, got {self.frames}")
        if self.bins < 1:
            raise ValueError(f"bins must be >= 1, got {self.bins}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.strategy == "fixed_ratio":
            if self.fixed_ratio is None or not (0.0 < self.fixed_ratio <= 1.0):
                raise ValueError(f"fixed_ratio must lie in (0, 1], got {self.fixed_ratio}")
        elif self.strategy != "adaptive_mean":
            raise ValueError(f"unknown selection strategy {self.strategy!r}")

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "PipelineConfig":
        """Build from flat config keys; unknown keys are rejected."""
        unknown = sorted(set(mapping) - set(CONFIG_KEYS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        m = dict(mapping)
        kwargs = {}
        for key in (
            "interval_us",
            "frames",
            "bins",
            "patch_size",
            "width",
            "height",
            "stage1_use_stc",
            "strategy",
            "fixed_ratio",
            "threads",
            "model_layers",
            "model_dim",
            "model_mlp_ratio",
            "out_dir",
        ):
            if key in m:
                kwargs[key] = m[key]
        lif = LifParams(
            tau=float(m.get("tau", 2.0)),
            v_th=float(m.get("v_th", 1.0)),
            v_reset=float(m.get("v_reset", 0.0)),
        )
        sigma_t = m.get("sigma_t")
        stc = StcParams(
            radius=int(m.get("radius", 2)),
            sigma_s=float(m.get("sigma_s", 2.0)),
            sigma_t=float(sigma_t) if sigma_t is not None else None,
        )
        tts = TtsConfig(
            aggregation=str(m.get("aggregation", "max")),
            epsilon=float(m.get("epsilon", 1e-8)),
            use_stc=bool(m.get("use_stc", True)),
            use_l2=bool(m.get("use_l2", True)),
        )
        return cls(lif=lif, stc=stc, tts=tts, **kwargs)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def model_dims(self, frames: int, tokens_per_frame: int) -> ModelDims:
        return ModelDims(
            layers=self.model_layers,
            embed_dim=self.model_dim,
            mlp_ratio=self.model_mlp_ratio,
            frames=frames,
            tokens_per_frame=tokens_per_frame,
        )


def resolve_threads(config: PipelineConfig, flag: int | None = None) -> int:
    """Worker-pool size: CLI flag, then PSTTS_THREADS, then config, then cores."""
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    if config.threads is not None:
        return max(1, config.threads)
    return os.cpu_count() or 1


def _frame_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _grid_l2(l2: np.ndarray | None, frames: int, grid_shape: tuple[int, int]) -> np.ndarray | None:
    if l2 is None:
        return None
    arr = np.asarray(l2, dtype=np.float64)
    cells = grid_shape[0] * grid_shape[1]
    if arr.ndim == 3 and arr.shape == (frames, *grid_shape):
        arr = arr.reshape(frames, cells)
    if arr.shape != (frames, cells):
        raise ValueError(
            f"l2 must be ({frames}, {cells}) or ({frames}, {grid_shape[0]}, {grid_shape[1]}),"
            f" got {arr.shape}"
        )
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise ValueError("l2 norms must be finite and non-negative")
    return arr


def run_from_densities(
    densities: Sequence[DensitySequence],
    config: PipelineConfig,
    l2: np.ndarray | None = None,
    threads: int | None = None,
) -> SelectionResult:
    """Run both stages over per-frame density tensors."""
    if not densities:
        raise ValueError("need at least one density frame")
    workers = resolve_threads(config, threads)
    p = config.patch_size

    def stage1(args):
        k, density = args
        maps, mask = spatial_stage(
            density, config.lif, config.stc, p, use_stc=config.stage1_use_stc
        )
        patches = extract_patches(maps.stc, mask, p, frame_index=k)
        return maps, mask, patches

    stage1_out = _frame_map(stage1, list(enumerate(densities, start=1)), workers)
    grid_shape = stage1_out[0][1].kept.shape
    l2_grid = _grid_l2(l2, len(densities), grid_shape)

    def stage2(k: int) -> FrameSelection:
        maps, mask, patches = stage1_out[k]
        previous: RetainedPatches | None = stage1_out[k - 1][2] if k > 0 else None
        mms, tss, tmr = frame_tmr(patches, previous, config.tts)
        stc_kept = maps.stc_down[mask.kept]
        l2_kept = l2_grid[k].reshape(grid_shape)[mask.kept] if l2_grid is not None else None
        scores = token_scores(stc_kept, tmr, l2_kept, config.tts)
        sel = select_temporal(scores, config.strategy, config.fixed_ratio)
        final = np.zeros(grid_shape, dtype=bool)
        coords = patches.grid_coords[sel]
        final[coords[:, 0], coords[:, 1]] = True
        if len(scores) == 0:
            threshold = 0.0
        elif config.strategy == "adaptive_mean":
            threshold = float(scores.mean())
        else:
            threshold = float(scores[sel].min()) if sel.any() else 0.0
        return FrameSelection(
            index=k + 1,
            stage1=mask,
            scores=Stage2Scores(
                mms=mms,
                tss=tss,
                tmr=tmr,
                l2=l2_kept if l2_kept is not None else np.ones_like(tmr),
                score=scores,
            ),
            final_kept=final,
            kept_count=int(sel.sum()),
            score_threshold=threshold,
            maps=maps,
        )

    frames = _frame_map(stage2, list(range(len(stage1_out))), workers)
    return SelectionResult(frames=frames, grid_shape=grid_shape)


def run(
    stream: EventStream,
    config: PipelineConfig,
    l2: np.ndarray | None = None,
    threads: int | None = None,
) -> SelectionResult:
    """Segment a stream into frame windows and run both stages."""
    segments = segment_stream(stream, config.interval_us)
    if config.frames is not None:
        segments = segments[: config.frames]
    workers = resolve_threads(config, threads)
    densities = _frame_map(
        lambda seg: bin_density(seg, config.bins, stream.width, stream.height),
        segments,
        workers,
    )
    return run_from_densities(densities, config, l2=l2, threads=workers)
