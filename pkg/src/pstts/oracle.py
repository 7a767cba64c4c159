"""Brute-force reference implementations of both scoring stages.

Everything here is scalar Python loops over lists, deliberately sharing no
code with the optimized numpy paths so the two can be checked against each
other. Slow on purpose; use for verification only.
"""

from __future__ import annotations

import math

import numpy as np

from .events import DensitySequence
from .spatial import SIGMA_T_FLOOR, LifParams, Stage1Mask, StcParams

__all__ = ["oracle_tc", "oracle_stc", "oracle_pool", "oracle_alpha", "oracle_stage1", "oracle_tmr"]


def oracle_tc(density: DensitySequence, lif: LifParams) -> list[list[int]]:
    """Per-pixel spike count via the literal membrane recurrence."""
    counts = density.counts
    bins, height, width = counts.shape
    out = []
    for y in range(height):
        row = []
        for x in range(width):
            v = lif.v_reset
            spikes = 0
            for b in range(bins):
                v = v + (float(counts[b][y][x]) - (v - lif.v_reset)) / lif.tau
                if v >= lif.v_th:
                    spikes += 1
                    v = lif.v_reset
            row.append(spikes)
        out.append(row)
    return out


def oracle_stc(tc: list[list[int]], params: StcParams) -> list[list[float]]:
    """Weighted neighborhood average with per-pair exp weights, border-clipped."""
    height = len(tc)
    width = len(tc[0])
    if params.sigma_t is not None:
        sigma_t = params.sigma_t
    else:
        n = height * width
        mean = sum(sum(row) for row in tc) / n
        var = sum((v - mean) ** 2 for row in tc for v in row) / n
        sigma_t = max(math.sqrt(var), SIGMA_T_FLOOR)
    r = params.radius
    out = []
    for y in range(height):
        row = []
        for x in range(width):
            num = 0.0
            den = 0.0
            for ny in range(max(0, y - r), min(height, y + r + 1)):
                for nx in range(max(0, x - r), min(width, x + r + 1)):
                    d2 = (y - ny) ** 2 + (x - nx) ** 2
                    dt = tc[y][x] - tc[ny][nx]
                    w = math.exp(
                        -d2 / (2.0 * params.sigma_s**2) - dt * dt / (2.0 * sigma_t**2)
                    )
                    num += w * tc[ny][nx]
                    den += w
            row.append(num / den)
        out.append(row)
    return out


def oracle_pool(stc: list[list[float]], patch_size: int) -> list[list[float]]:
    """p x p mean pooling with implicit zero padding on the ragged edges."""
    height = len(stc)
    width = len(stc[0])
    hp = -(-height // patch_size)
    wp = -(-width // patch_size)
    out = []
    for i in range(hp):
        row = []
        for j in range(wp):
            total = 0.0
            for dy in range(patch_size):
                for dx in range(patch_size):
                    y = i * patch_size + dy
                    x = j * patch_size + dx
                    if y < height and x < width:
                        total += stc[y][x]
            row.append(total / (patch_size * patch_size))
        out.append(row)
    return out


def oracle_alpha(grid: list[list[float]]) -> float:
    cells = [v for row in grid for v in row]
    return sum(cells) / len(cells)


def oracle_stage1(
    density: DensitySequence, lif: LifParams, stc: StcParams, patch_size: int
) -> Stage1Mask:
    """Full stage-1 reference: recurrence, weighting, pooling, mean threshold."""
    tc = oracle_tc(density, lif)
    smoothed = oracle_stc(tc, stc)
    pooled = oracle_pool(smoothed, patch_size)
    alpha = oracle_alpha(pooled)
    cells = [v for row in pooled for v in row]
    if min(cells) == max(cells):
        alpha = cells[0]
        kept = [[True for _ in row] for row in pooled]
    else:
        kept = [[v >= alpha for v in row] for row in pooled]
    kept_arr = np.array(kept, dtype=bool)
    return Stage1Mask(kept=kept_arr, alpha=alpha, kept_count=int(kept_arr.sum()))


def _mean(vals: list[float]) -> float:
    return sum(vals) / len(vals)


def _std(vals: list[float]) -> float:
    m = _mean(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / len(vals))


def oracle_tmr(
    current: list[list[float]], previous: list[list[float]], epsilon: float = 1e-8
) -> list[float]:
    """Exhaustive max-aggregation redundancy: for every current patch, the best
    joint mean/shape match over all previous patches. Patches are flat lists."""
    if not previous:
        return [1.0 for _ in current]
    out = []
    for a in current:
        best = -math.inf
        mu_a = _mean(a)
        sd_a = _std(a)
        for b in previous:
            mu_b = _mean(b)
            sd_b = _std(b)
            mms = (2.0 * mu_a * mu_b + epsilon) / (mu_a**2 + mu_b**2 + epsilon)
            cov = _mean([ai * bi for ai, bi in zip(a, b)]) - mu_a * mu_b
            tss = (cov + epsilon) / (sd_a * sd_b + epsilon)
            best = max(best, mms * tss)
        out.append(1.0 - best)
    return out
