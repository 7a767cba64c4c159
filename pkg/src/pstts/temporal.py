"""Stage 2: temporal token selection.

Compares the retained patches of adjacent frames by motion magnitude (mean
similarity) and trajectory shape (structural correlation), turns the joint
similarity into a redundancy score, and keeps the tokens whose combined
importance clears the adaptive mean threshold (or a fixed ratio).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spatial import ContinuityMaps, Stage1Mask, pad_to_patch_grid

__all__ = [
    "TtsConfig",
    "RetainedPatches",
    "Stage2Scores",
    "FrameSelection",
    "SelectionResult",
    "extract_patches",
    "pairwise_mms",
    "pairwise_tss",
    "frame_tmr",
    "token_scores",
    "select_temporal",
]

AGGREGATIONS = ("max", "mean", "same_position")
STRATEGIES = ("adaptive_mean", "fixed_ratio")


@dataclass(frozen=True)
class TtsConfig:
    """Stage-2 knobs: how pairwise similarities aggregate over the previous
    frame, the variance stabilizer, and which score factors are active."""

    aggregation: str = "max"
    epsilon: float = 1e-8
    use_stc: bool = True
    use_l2: bool = True

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class RetainedPatches:
    """Stage-1-kept p x p patches cut from one frame's smoothed continuity map,
    in row-major order of their grid cells."""

    patches: np.ndarray  # (M, p, p)
    grid_coords: np.ndarray  # (M, 2) as (row, col)
    frame_index: int

    @property
    def count(self) -> int:
        return self.patches.shape[0]


@dataclass(frozen=True)
class Stage2Scores:
    """Per-token similarity components and the resulting importance scores."""

    mms: np.ndarray
    tss: np.ndarray
    tmr: np.ndarray
    l2: np.ndarray
    score: np.ndarray


@dataclass(frozen=True)
class FrameSelection:
    """Both stages' outcome for one frame."""

    index: int
    stage1: Stage1Mask
    scores: Stage2Scores
    final_kept: np.ndarray  # bool (Hp, Wp), subset of stage1.kept
    kept_count: int
    score_threshold: float
    maps: ContinuityMaps

    @property
    def keep_ratio(self) -> float:
        return self.kept_count / self.final_kept.size


@dataclass(frozen=True)
class SelectionResult:
    """Pipeline output: per-frame masks and scores plus run-level keep ratios."""

    frames: list[FrameSelection]
    grid_shape: tuple[int, int]

    @property
    def keep_ratios(self) -> list[float]:
        return [f.keep_ratio for f in self.frames]

    @property
    def overall_keep_ratio(self) -> float:
        cells = self.grid_shape[0] * self.grid_shape[1]
        total = cells * len(self.frames)
        return sum(f.kept_count for f in self.frames) / total if total else 1.0

    @property
    def kept_counts(self) -> list[int]:
        return [f.kept_count for f in self.frames]


def extract_patches(
    stc: np.ndarray, mask: Stage1Mask, patch_size: int, frame_index: int = 0
) -> RetainedPatches:
    """Cut the stage-1-kept p x p patches out of the (zero-padded) score map,
    row-major over kept grid cells."""
    stc = np.asarray(stc, dtype=np.float64)
    padded = pad_to_patch_grid(stc, patch_size)
    hp = padded.shape[0] // patch_size
    wp = padded.shape[1] // patch_size
    if (hp, wp) != mask.kept.shape:
        raise ValueError(
            f"mask grid {mask.kept.shape} does not match map {stc.shape} at patch size {patch_size}"
        )
    coords = np.argwhere(mask.kept)  # row-major by construction
    blocks = padded.reshape(hp, patch_size, wp, patch_size).transpose(0, 2, 1, 3)
    patches = blocks[coords[:, 0], coords[:, 1]]
    return RetainedPatches(patches=patches, grid_coords=coords, frame_index=frame_index)


def pairwise_mms(patch_i: np.ndarray, patch_j: np.ndarray, epsilon: float = 1e-8) -> float:
    """Motion magnitude similarity of two patches:
    (2 mu_i mu_j + eps) / (mu_i^2 + mu_j^2 + eps).

    1 exactly when the means coincide (two empty patches included, via the
    stabilizer); in [0, 1] whenever both means are non-negative.
    """
    mu_i = float(np.mean(patch_i))
    mu_j = float(np.mean(patch_j))
    return (2.0 * mu_i * mu_j + epsilon) / (mu_i * mu_i + mu_j * mu_j + epsilon)


def pairwise_tss(patch_i: np.ndarray, patch_j: np.ndarray, epsilon: float = 1e-8) -> float:
    """Trajectory shape similarity: stabilized Pearson correlation over cells,
    (cov + eps) / (sigma_i sigma_j + eps) with population statistics.

    Two flat patches correlate perfectly (0/0 resolves to 1 via the
    stabilizer): identical shapes, no trajectory at all.
    """
    a = np.asarray(patch_i, dtype=np.float64).ravel()
    b = np.asarray(patch_j, dtype=np.float64).ravel()
    cov = float(np.mean(a * b) - np.mean(a) * np.mean(b))
    return (cov + epsilon) / (float(np.std(a)) * float(np.std(b)) + epsilon)


def _similarity_matrices(
    current: RetainedPatches, previous: RetainedPatches, epsilon: float
) -> tuple[np.ndarray, np.ndarray]:
    """All-pairs MMS and TSS between current (rows) and previous (cols)."""
    p2 = current.patches.shape[1] * current.patches.shape[2]
    cur = current.patches.reshape(current.count, p2)
    prv = previous.patches.reshape(previous.count, p2)
    mu_c = cur.mean(axis=1)
    mu_p = prv.mean(axis=1)
    sd_c = cur.std(axis=1)
    sd_p = prv.std(axis=1)
    mms = (2.0 * np.outer(mu_c, mu_p) + epsilon) / (
        mu_c[:, None] ** 2 + mu_p[None, :] ** 2 + epsilon
    )
    cov = cur @ prv.T / p2 - np.outer(mu_c, mu_p)
    tss = (cov + epsilon) / (np.outer(sd_c, sd_p) + epsilon)
    return mms, tss


def frame_tmr(
    current: RetainedPatches,
    previous: RetainedPatches | None,
    cfg: TtsConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-token (mms, tss, tmr) of a frame against the previous frame's
    retained set.

    The joint similarity mms*tss is aggregated per pair and then reduced over
    previous patches: `max` flags a token as redundant if any previous patch
    matches it, `same_position` only consults the co-located cell, and `mean`
    averages the joint product (reported with the product folded into mms,
    since a mean of products has no factorization). TMR = 1 - similarity;
    with no previous frame every token is fully novel (TMR = 1).
    """
    m = current.count
    if previous is None or previous.count == 0 or m == 0:
        zeros = np.zeros(m)
        return zeros, zeros.copy(), np.ones(m)
    mms_mat, tss_mat = _similarity_matrices(current, previous, cfg.epsilon)
    product = mms_mat * tss_mat
    if cfg.aggregation == "max":
        best = np.argmax(product, axis=1)
        rows = np.arange(m)
        mms = mms_mat[rows, best]
        tss = tss_mat[rows, best]
    elif cfg.aggregation == "same_position":
        prev_index = {tuple(c): j for j, c in enumerate(previous.grid_coords)}
        mms = np.zeros(m)
        tss = np.zeros(m)
        for i, coord in enumerate(current.grid_coords):
            j = prev_index.get(tuple(coord))
            if j is not None:
                mms[i] = mms_mat[i, j]
                tss[i] = tss_mat[i, j]
    else:  # mean
        mms = product.mean(axis=1)
        tss = np.ones(m)
    tmr = 1.0 - mms * tss
    return mms, tss, tmr


def token_scores(
    stc_down_kept: np.ndarray,
    tmr: np.ndarray,
    l2: np.ndarray | None,
    cfg: TtsConfig,
) -> np.ndarray:
    """Combine the active factors into the per-token importance score:
    score = [stc_down] * tmr * [l2], each bracket subject to its flag.
    Without embedding norms (standalone mode) l2 defaults to all ones."""
    tmr = np.asarray(tmr, dtype=np.float64)
    stc_down_kept = np.asarray(stc_down_kept, dtype=np.float64)
    if l2 is None:
        l2 = np.ones_like(tmr)
    l2 = np.asarray(l2, dtype=np.float64)
    if not (len(stc_down_kept) == len(tmr) == len(l2)):
        raise ValueError(
            f"score factor lengths differ: stc {len(stc_down_kept)}, tmr {len(tmr)}, l2 {len(l2)}"
        )
    score = tmr.copy()
    if cfg.use_stc:
        score = score * stc_down_kept
    if cfg.use_l2:
        score = score * l2
    return score


def select_temporal(
    scores: np.ndarray,
    strategy: str = "adaptive_mean",
    ratio: float | None = None,
) -> np.ndarray:
    """Pick the surviving tokens; returns a boolean mask over the M scores.

    adaptive_mean drops tokens strictly below the mean score (ties kept, flat
    score vectors keep everything). fixed_ratio keeps the ceil(r * M) highest
    scorers, breaking ties toward the lower row-major index.
    """
    scores = np.asarray(scores, dtype=np.float64)
    m = len(scores)
    if strategy == "adaptive_mean":
        if m == 0:
            return np.zeros(0, dtype=bool)
        if scores.min() == scores.max():
            return np.ones(m, dtype=bool)
        return scores >= scores.mean()
    if strategy == "fixed_ratio":
        if ratio is None or not (0.0 < ratio <= 1.0):
            raise ValueError(f"fixed_ratio requires a ratio in (0, 1], got {ratio}")
        if m == 0:
            return np.zeros(0, dtype=bool)
        keep = int(np.ceil(ratio * m))
        order = np.argsort(-scores, kind="stable")
        mask = np.zeros(m, dtype=bool)
        mask[order[:keep]] = True
        return mask
    raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
