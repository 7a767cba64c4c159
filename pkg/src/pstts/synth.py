"""Synthetic event scenes with per-patch ground truth.

Scenes compose moving edges and static textures, Poisson-sampled with a
counter-based generator so identical seeds reproduce identical streams on any
platform. Alongside the stream, every patch of every frame gets a label
(active / redundant / noise_only / empty) computed from geometry alone, which
the benchmark uses to measure how well each stage separates signal from noise
and repetition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import load_toml
from .events import EventStream
from .temporal import SelectionResult

__all__ = [
    "MovingEdge",
    "StaticTexture",
    "SceneSpec",
    "NoiseSpec",
    "GroundTruth",
    "generate_scene",
    "load_scene_spec",
    "load_noise_spec",
    "stage1_denoise_metrics",
    "stage2_redundancy_metrics",
    "default_denoise_scene",
    "default_redundancy_scene",
    "default_flops_scene",
    "default_noise",
    "LABEL_EMPTY",
    "LABEL_ACTIVE",
    "LABEL_NOISE_ONLY",
    "LABEL_REDUNDANT",
    "LABEL_NAMES",
]

GEN_STEP_US = 1000  # scene sampling granularity

LABEL_EMPTY = 0
LABEL_ACTIVE = 1
LABEL_NOISE_ONLY = 2
LABEL_REDUNDANT = 3
LABEL_NAMES = {
    LABEL_EMPTY: "empty",
    LABEL_ACTIVE: "active",
    LABEL_NOISE_ONLY: "noise_only",
    LABEL_REDUNDANT: "redundant",
}


@dataclass(frozen=True)
class MovingEdge:
    """A bar of constant velocity: `orientation` 'h' lays the length along x
    (thickness along y), 'v' the other way around. Rate is events per covered
    pixel per second."""

    x: float
    y: float
    vx: float
    vy: float
    length: int
    thickness: int
    rate: float
    orientation: str = "h"

    def __post_init__(self):
        if self.orientation not in ("h", "v"):
            raise ValueError(f"orientation must be 'h' or 'v', got {self.orientation!r}")
        if self.length < 1 or self.thickness < 1:
            raise ValueError("edge length and thickness must be >= 1")
        if self.rate < 0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class StaticTexture:
    """A fixed rectangle emitting events at a uniform rate."""

    x: int
    y: int
    width: int
    height: int
    rate: float

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("texture extent must be >= 1")
        if self.rate < 0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class SceneSpec:
    """Scene geometry, duration, elements and the frame/patch granularity the
    ground-truth labels are computed on."""

    width: int
    height: int
    duration_us: int
    seed: int
    frame_interval_us: int
    patch_size: int
    edges: tuple[MovingEdge, ...] = ()
    textures: tuple[StaticTexture, ...] = ()

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"invalid geometry {self.width}x{self.height}")
        if self.duration_us <= 0:
            raise ValueError(f"duration must be positive, got {self.duration_us}")
        if self.frame_interval_us <= 0 or self.frame_interval_us % GEN_STEP_US:
            raise ValueError(
                f"frame interval must be a positive multiple of {GEN_STEP_US}, "
                f"got {self.frame_interval_us}"
            )
        if self.patch_size < 1:
            raise ValueError(f"patch size must be >= 1, got {self.patch_size}")
        for e in self.edges:
            if not (0 <= e.x < self.width and 0 <= e.y < self.height):
                raise ValueError(f"edge starts at ({e.x}, {e.y}), outside the sensor")
        for t in self.textures:
            if t.x < 0 or t.y < 0 or t.x + t.width > self.width or t.y + t.height > self.height:
                raise ValueError("texture region extends outside the sensor")

    @property
    def frame_count(self) -> int:
        return max(1, -(-self.duration_us // self.frame_interval_us))

    @property
    def grid_shape(self) -> tuple[int, int]:
        p = self.patch_size
        return (-(-self.height // p), -(-self.width // p))


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform background (shot) noise plus a handful of hot pixels placed in
    patches no scene element ever touches."""

    shot_noise_rate: float = 0.0  # events / pixel / second over the whole sensor
    hot_pixel_count: int = 0
    hot_pixel_rate: float = 0.0  # events / second per hot pixel
    seed: int = 0

    def __post_init__(self):
        if self.shot_noise_rate < 0 or self.hot_pixel_rate < 0:
            raise ValueError("noise rates must be >= 0")
        if self.hot_pixel_count < 0:
            raise ValueError(f"hot pixel count must be >= 0, got {self.hot_pixel_count}")


@dataclass(frozen=True)
class GroundTruth:
    """Per-patch label grid for every frame plus the granularity it was
    computed at."""

    labels: np.ndarray  # (K, Hp, Wp) uint8 of LABEL_* values
    patch_size: int
    frame_interval_us: int

    @property
    def frame_count(self) -> int:
        return self.labels.shape[0]

    def count(self, label: int) -> int:
        return int((self.labels == label).sum())

    def to_dict(self) -> dict:
        return {
            "grid": [int(self.labels.shape[1]), int(self.labels.shape[2])],
            "frames": int(self.labels.shape[0]),
            "patch_size": self.patch_size,
            "frame_interval_us": self.frame_interval_us,
            "label_names": {str(k): v for k, v in sorted(LABEL_NAMES.items())},
            "labels": self.labels.reshape(self.labels.shape[0], -1).tolist(),
        }


def _element_rect(element, t_us: float, spec: SceneSpec):
    """Covered pixel rectangle of an element at time t, clipped to the sensor;
    None when fully outside."""
    if isinstance(element, StaticTexture):
        x0, y0 = element.x, element.y
        w, h = element.width, element.height
    else:
        t_s = t_us * 1e-6
        bx = math.floor(element.x + element.vx * t_s)
        by = math.floor(element.y + element.vy * t_s)
        if element.orientation == "h":
            x0, y0, w, h = bx, by, element.length, element.thickness
        else:
            x0, y0, w, h = bx, by, element.thickness, element.length
    x1 = min(x0 + w, spec.width)
    y1 = min(y0 + h, spec.height)
    x0 = max(x0, 0)
    y0 = max(y0, 0)
    if x0 >= x1 or y0 >= y1:
        return None
    return y0, y1, x0, x1


def generate_scene(
    spec: SceneSpec, noise: NoiseSpec | None = None
) -> tuple[EventStream, GroundTruth]:
    """Sample the scene's event stream and compute its ground-truth labels.

    The stream is anchored at t_start = 0 / t_end = duration so frame windows
    align with the labels regardless of when the first event fires. Element
    geometry is evaluated at millisecond tick starts; both the sampled events
    and the occupancy behind the labels use that same convention. A patch is
    active when a (non-zero-rate) element covers at least one of its pixels
    during the frame window, redundant when that coverage pattern repeats the
    previous frame's exactly, noise_only when it holds noise events and no
    coverage, and empty otherwise.
    """
    noise = noise or NoiseSpec()
    rng = np.random.Generator(np.random.Philox(spec.seed))
    k_total = spec.frame_count
    interval = spec.frame_interval_us
    occupancy = np.zeros((k_total, spec.height, spec.width), dtype=bool)
    elements = [e for e in (*spec.edges, *spec.textures) if e.rate > 0]

    ts, xs, ys = [], [], []
    n_steps = -(-spec.duration_us // GEN_STEP_US)
    for step in range(n_steps):
        lo = step * GEN_STEP_US
        hi = min(lo + GEN_STEP_US, spec.duration_us)
        frame = lo // interval
        dt_s = (hi - lo) * 1e-6
        for element in elements:
            rect = _element_rect(element, lo, spec)
            if rect is None:
                continue
            y0, y1, x0, x1 = rect
            occupancy[frame, y0:y1, x0:x1] = True
            counts = rng.poisson(element.rate * dt_s, size=(y1 - y0) * (x1 - x0))
            total = int(counts.sum())
            if total == 0:
                continue
            py, px = np.divmod(np.repeat(np.arange(counts.size), counts), x1 - x0)
            ts.append(rng.integers(lo, hi, size=total))
            ys.append(py + y0)
            xs.append(px + x0)

    noise_mask = []
    rng_n = np.random.Generator(np.random.Philox(noise.seed))
    dur_s = spec.duration_us * 1e-6
    if noise.shot_noise_rate > 0:
        n = int(rng_n.poisson(noise.shot_noise_rate * spec.width * spec.height * dur_s))
        ts.append(rng_n.integers(0, spec.duration_us, size=n))
        xs.append(rng_n.integers(0, spec.width, size=n))
        ys.append(rng_n.integers(0, spec.height, size=n))
        noise_mask.append(n)
    if noise.hot_pixel_count > 0 and noise.hot_pixel_rate > 0:
        hot_y, hot_x = _hot_pixel_sites(spec, occupancy, noise.hot_pixel_count, rng_n)
        for y, x in zip(hot_y, hot_x):
            n = int(rng_n.poisson(noise.hot_pixel_rate * dur_s))
            ts.append(rng_n.integers(0, spec.duration_us, size=n))
            xs.append(np.full(n, x, dtype=np.int64))
            ys.append(np.full(n, y, dtype=np.int64))
            noise_mask.append(n)

    t = np.concatenate(ts) if ts else np.empty(0, dtype=np.int64)
    x = np.concatenate(xs) if xs else np.empty(0, dtype=np.int64)
    y = np.concatenate(ys) if ys else np.empty(0, dtype=np.int64)
    n_noise = sum(noise_mask)
    is_noise = np.zeros(len(t), dtype=bool)
    if n_noise:
        is_noise[len(t) - n_noise :] = True
    p = rng.integers(0, 2, size=len(t)) * 2 - 1
    order = np.argsort(t, kind="stable")
    stream = EventStream(
        t[order], x[order], y[order], p[order],
        spec.width, spec.height, t_start=0, t_end=spec.duration_us,
    )
    gt = _ground_truth(spec, occupancy, t[is_noise], x[is_noise], y[is_noise])
    return stream, gt


def _hot_pixel_sites(
    spec: SceneSpec, occupancy: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One pixel in each of `count` distinct patches untouched by any element."""
    p = spec.patch_size
    hp, wp = spec.grid_shape
    covered = np.zeros((hp * p, wp * p), dtype=bool)
    covered[: spec.height, : spec.width] = occupancy.any(axis=0)
    patch_free = ~covered.reshape(hp, p, wp, p).any(axis=(1, 3))
    # exclude ragged border patches so the pixel always lies on the sensor
    full_rows = spec.height // p
    full_cols = spec.width // p
    patch_free[full_rows:, :] = False
    patch_free[:, full_cols:] = False
    free = np.argwhere(patch_free)
    if len(free) < count:
        raise ValueError(
            f"cannot place {count} hot pixels: only {len(free)} element-free patches"
        )
    chosen = free[rng.choice(len(free), size=count, replace=False)]
    offs = rng.integers(0, p, size=(count, 2))
    return chosen[:, 0] * p + offs[:, 0], chosen[:, 1] * p + offs[:, 1]


def _ground_truth(
    spec: SceneSpec,
    occupancy: np.ndarray,
    noise_t: np.ndarray,
    noise_x: np.ndarray,
    noise_y: np.ndarray,
) -> GroundTruth:
    k_total = spec.frame_count
    p = spec.patch_size
    hp, wp = spec.grid_shape
    padded = np.zeros((k_total, hp * p, wp * p), dtype=bool)
    padded[:, : spec.height, : spec.width] = occupancy
    blocks = padded.reshape(k_total, hp, p, wp, p)
    any_occ = blocks.any(axis=(2, 4))

    noise_counts = np.zeros((k_total, hp, wp), dtype=np.int64)
    if len(noise_t):
        k = np.minimum(noise_t // spec.frame_interval_us, k_total - 1)
        np.add.at(noise_counts, (k, noise_y // p, noise_x // p), 1)

    labels = np.full((k_total, hp, wp), LABEL_EMPTY, dtype=np.uint8)
    labels[any_occ] = LABEL_ACTIVE
    for k in range(1, k_total):
        same = (blocks[k] == blocks[k - 1]).all(axis=(1, 3)) & any_occ[k]
        labels[k][same] = LABEL_REDUNDANT
    labels[(~any_occ) & (noise_counts > 0)] = LABEL_NOISE_ONLY
    return GroundTruth(labels=labels, patch_size=p, frame_interval_us=spec.frame_interval_us)


def load_scene_spec(path: str | Path) -> SceneSpec:
    """Read a scene spec from a TOML file (see configs/ for the key layout)."""
    data = load_toml(path)
    edges = tuple(MovingEdge(**e) for e in data.pop("moving_edge", []))
    textures = tuple(StaticTexture(**t) for t in data.pop("static_texture", []))
    return SceneSpec(edges=edges, textures=textures, **data)


def load_noise_spec(path: str | Path) -> NoiseSpec:
    return NoiseSpec(**load_toml(path))


def _stacked(selection: SelectionResult, attr: str) -> np.ndarray:
    if attr == "stage1":
        return np.stack([f.stage1.kept for f in selection.frames])
    return np.stack([f.final_kept for f in selection.frames])


def stage1_denoise_metrics(gt: GroundTruth, selection: SelectionResult) -> dict:
    """How stage 1 separates noise from signal, against the labels.

    Noise removal treats noise_only patches as positives and a stage-1 drop as
    a positive prediction; empty patches are excluded from precision so plain
    background does not dilute it. Rates are None when a class has no members.
    """
    labels = gt.labels
    kept = _stacked(selection, "stage1")
    if labels.shape != kept.shape:
        raise ValueError(f"labels {labels.shape} do not match selection {kept.shape}")
    noise = labels == LABEL_NOISE_ONLY
    signal = (labels == LABEL_ACTIVE) | (labels == LABEL_REDUNDANT)
    active = labels == LABEL_ACTIVE
    tp = int((noise & ~kept).sum())
    fp = int((signal & ~kept).sum())
    return {
        "noise_patches": int(noise.sum()),
        "noise_drop_rate": tp / noise.sum() if noise.any() else None,
        "noise_precision": tp / (tp + fp) if noise.any() and (tp + fp) else None,
        "active_patches": int(active.sum()),
        "active_keep_rate": (
            int((active & kept).sum()) / active.sum() if active.any() else None
        ),
    }


def stage2_redundancy_metrics(gt: GroundTruth, selection: SelectionResult) -> dict:
    """How stage 2 prunes repeated patterns among the stage-1 survivors.

    Positives are redundant-labeled patches that stage 1 kept; a stage-2 drop
    is a positive prediction. Fresh keep rate is measured over active-labeled
    stage-1 survivors. Frame 1 is excluded throughout: redundancy against a
    previous frame is undefined there, so its labels carry no redundant class.
    """
    stage1 = _stacked(selection, "stage1")
    if gt.labels.shape != stage1.shape:
        raise ValueError(f"labels {gt.labels.shape} do not match selection {stage1.shape}")
    labels = gt.labels[1:]
    stage1 = stage1[1:]
    final = _stacked(selection, "final")[1:]
    redundant = (labels == LABEL_REDUNDANT) & stage1
    fresh = (labels == LABEL_ACTIVE) & stage1
    dropped = stage1 & ~final
    tp = int((redundant & dropped).sum())
    fp = int((fresh & dropped).sum())
    return {
        "redundant_patches": int(redundant.sum()),
        "redundant_drop_rate": tp / redundant.sum() if redundant.any() else None,
        "redundancy_precision": tp / (tp + fp) if redundant.any() and (tp + fp) else None,
        "fresh_patches": int(fresh.sum()),
        "fresh_keep_rate": (
            int((fresh & final).sum()) / fresh.sum() if fresh.any() else None
        ),
    }


def default_denoise_scene() -> SceneSpec:
    """Moving-edge scene used by the denoising regression: one band sweeping
    down a 128x128 sensor for 8 frames."""
    return SceneSpec(
        width=128,
        height=128,
        duration_us=2_000_000,
        seed=7,
        frame_interval_us=250_000,
        patch_size=16,
        edges=(
            MovingEdge(x=32, y=8, vx=0.0, vy=48.0, length=64, thickness=3, rate=400.0),
        ),
    )


def default_noise() -> NoiseSpec:
    """Shot noise plus five hot pixels, matching the denoising regression."""
    return NoiseSpec(shot_noise_rate=3.0, hot_pixel_count=5, hot_pixel_rate=2000.0, seed=11)


def default_redundancy_scene() -> SceneSpec:
    """Half-repeating scene: structured static strips in the top half repeat
    every frame, a moving band sweeps fresh patterns through the bottom half."""
    strip_cols = (8, 40, 72, 104)
    return SceneSpec(
        width=128,
        height=128,
        duration_us=2_000_000,
        seed=21,
        frame_interval_us=250_000,
        patch_size=16,
        edges=(
            MovingEdge(x=0, y=66, vx=0.0, vy=30.0, length=128, thickness=3, rate=300.0),
        ),
        textures=tuple(
            StaticTexture(x=c, y=0, width=4, height=64, rate=300.0) for c in strip_cols
        ),
    )


def default_flops_scene() -> SceneSpec:
    """Dense scene for the savings report: a texture covering 49 of 64 patches,
    so a fixed-ratio second stage pins the overall keep ratio."""
    return SceneSpec(
        width=64,
        height=64,
        duration_us=2_000_000,
        seed=33,
        frame_interval_us=250_000,
        patch_size=8,
        textures=(StaticTexture(x=0, y=0, width=56, height=56, rate=30.0),),
    )
