"""Stage 1: spatial token purification.

Scores every pixel's temporal continuity with a leaky integrate-and-fire
recurrence over the binned density, smooths it with joint spatial/continuity
Gaussian weights to suppress isolated noise, average-pools to the token grid,
and thresholds at the grid mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import DensitySequence

__all__ = [
    "LifParams",
    "StcParams",
    "ContinuityMaps",
    "Stage1Mask",
    "lif_continuity",
    "effective_sigma_t",
    "stc_map",
    "pool_stc",
    "purify",
    "spatial_stage",
]

SIGMA_T_FLOOR = 1e-6


@dataclass(frozen=True)
class LifParams:
    """Leaky integrate-and-fire constants: membrane time constant, firing
    threshold and reset potential (per-bin units)."""

    tau: float = 2.0
    v_th: float = 1.0
    v_reset: float = 0.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.v_th <= self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")


@dataclass(frozen=True)
class StcParams:
    """Neighborhood half-width and bandwidths for the joint weighting.

    `sigma_t = None` selects the adaptive bandwidth: the continuity map's own
    standard deviation, floored at 1e-6.
    """

    radius: int = 2
    sigma_s: float = 2.0
    sigma_t: float | None = None

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if self.sigma_s <= 0:
            raise ValueError(f"sigma_s must be positive, got {self.sigma_s}")
        if self.sigma_t is not None and self.sigma_t <= 0:
            raise ValueError(f"sigma_t must be positive, got {self.sigma_t}")


@dataclass(frozen=True)
class ContinuityMaps:
    """Per-frame score maps: spike counts, weighted continuity, and the
    patch-pooled grid the stage-1 threshold operates on."""

    tc: np.ndarray  # (H, W) ints in [0, B]
    stc: np.ndarray  # (H, W) reals >= 0
    stc_down: np.ndarray  # (ceil(H/p), ceil(W/p)) reals >= 0
    patch_size: int


@dataclass(frozen=True)
class Stage1Mask:
    """Grid cells surviving the adaptive mean threshold."""

    kept: np.ndarray  # bool (Hp, Wp)
    alpha: float
    kept_count: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.kept.shape


def lif_continuity(density: DensitySequence, params: LifParams) -> np.ndarray:
    """Count, per pixel, the spikes a LIF neuron fires over the density bins.

    Membrane update per bin b: V <- V + (A[b] - (V - v_reset)) / tau, starting
    from v_reset; a spike fires whenever V >= v_th and resets V to v_reset.
    The spike count is capped at B by construction, which pins hot-pixel
    activity to the window level no matter how many events it emits.
    """
    a = density.counts.astype(np.float64)
    bins = a.shape[0]
    v = np.full(a.shape[1:], params.v_reset, dtype=np.float64)
    tc = np.zeros(a.shape[1:], dtype=np.int64)
    for b in range(bins):
        v += (a[b] - (v - params.v_reset)) / params.tau
        fired = v >= params.v_th
        tc += fired
        v[fired] = params.v_reset
    return tc


def effective_sigma_t(tc: np.ndarray, params: StcParams) -> float:
    """Continuity bandwidth actually used: fixed if configured, else the
    frame's own TC standard deviation (floored)."""
    if params.sigma_t is not None:
        return params.sigma_t
    return max(float(np.std(tc)), SIGMA_T_FLOOR)


def stc_map(tc: np.ndarray, params: StcParams) -> np.ndarray:
    """Smooth the continuity map with joint spatial/continuity weights.

    Each pixel becomes the weighted mean of its (2*radius+1)^2 neighborhood
    (clipped at borders, self included) with
    w = exp(-|dpos|^2 / (2 sigma_s^2) - |dTC|^2 / (2 sigma_t^2)),
    so spatially close neighbors of similar continuity dominate while isolated
    spikes are pulled toward their quiet surroundings. The self weight is 1,
    hence the normalizer is always positive.
    """
    tc = np.asarray(tc, dtype=np.float64)
    h, w = tc.shape
    sigma_t = effective_sigma_t(tc, params)
    inv_2ss = 1.0 / (2.0 * params.sigma_s**2)
    inv_2st = 1.0 / (2.0 * sigma_t**2)
    num = np.zeros_like(tc)
    den = np.zeros_like(tc)
    r = params.radius
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            ys = slice(max(0, -dy), h - max(0, dy))
            xs = slice(max(0, -dx), w - max(0, dx))
            ysn = slice(max(0, dy), h + min(0, dy))
            xsn = slice(max(0, dx), w + min(0, dx))
            neigh = tc[ysn, xsn]
            diff = tc[ys, xs] - neigh
            wgt = np.exp(-(dy * dy + dx * dx) * inv_2ss - diff * diff * inv_2st)
            num[ys, xs] += wgt * neigh
            den[ys, xs] += wgt
    return num / den


def pool_stc(stc: np.ndarray, patch_size: int) -> np.ndarray:
    """Non-overlapping p x p average pooling; right/bottom edges are
    zero-padded to the next patch multiple and padded cells count."""
    if patch_size <= 0:
        raise ValueError(f"patch size must be positive, got {patch_size}")
    stc = np.asarray(stc, dtype=np.float64)
    padded = pad_to_patch_grid(stc, patch_size)
    hp = padded.shape[0] // patch_size
    wp = padded.shape[1] // patch_size
    return padded.reshape(hp, patch_size, wp, patch_size).mean(axis=(1, 3))


def pad_to_patch_grid(values: np.ndarray, patch_size: int) -> np.ndarray:
    """Zero-pad a map on the right/bottom so both dims divide by patch_size."""
    h, w = values.shape
    ph = (-h) % patch_size
    pw = (-w) % patch_size
    if ph == 0 and pw == 0:
        return values
    return np.pad(values, ((0, ph), (0, pw)))


def purify(stc_down: np.ndarray) -> Stage1Mask:
    """Threshold the pooled grid at its own mean.

    Cells strictly below the mean are removed; ties are kept. A flat grid
    (including the all-zero empty frame) keeps every cell, so degenerate
    frames never collapse to zero tokens.
    """
    stc_down = np.asarray(stc_down, dtype=np.float64)
    if stc_down.size == 0:
        raise ValueError("cannot purify an empty grid")
    alpha = float(stc_down.mean())
    if stc_down.min() == stc_down.max():
        kept = np.ones(stc_down.shape, dtype=bool)
        alpha = float(stc_down.flat[0])
    else:
        kept = stc_down >= alpha
    return Stage1Mask(kept=kept, alpha=alpha, kept_count=int(kept.sum()))


def spatial_stage(
    density: DensitySequence,
    lif: LifParams,
    stc: StcParams,
    patch_size: int,
    use_stc: bool = True,
) -> tuple[ContinuityMaps, Stage1Mask]:
    """Run the full stage-1 chain on one frame's density tensor.

    `use_stc=False` skips the joint weighting and pools the raw spike counts,
    matching the continuity-only scoring configuration.
    """
    tc = lif_continuity(density, lif)
    smoothed = stc_map(tc, stc) if use_stc else tc.astype(np.float64)
    down = pool_stc(smoothed, patch_size)
    maps = ContinuityMaps(tc=tc, stc=smoothed, stc_down=down, patch_size=patch_size)
    return maps, purify(down)
