"""Array-in/array-out adapter around the pstts pipeline.

Deep-learning code hands numpy arrays straight in (raw events or precomputed
density tensors, plus optional per-token embedding norms) and gets boolean
keep masks back, numerically identical to what the CLI writes for the same
input. Arrays are passed through as views wherever possible; the only copies
are a stable sort for unsorted events and dtype normalization.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from pstts.events import DensitySequence, EventStream
from pstts.pipeline import PipelineConfig, resolve_threads, run, run_from_densities
from pstts.temporal import SelectionResult

__all__ = ["Session", "sparsify"]
__version__ = "0.1.0"


class Session:
    """A configured pipeline handle; stateless after construction, so one
    session may serve concurrent callers.

    Accepts the same flat config keys as the CLI config file. Event input is
    an (N, 4) integer array with columns (t, x, y, p) and requires `width` and
    `height` in the config; density input is a (K, B, H, W) count tensor.
    """

    def __init__(self, config: Mapping[str, object] | None = None, **overrides):
        mapping = {**(config or {}), **overrides}
        self._config = PipelineConfig.from_mapping(mapping)

    @property
    def config(self) -> PipelineConfig:
        return self._config

    def sparsify(
        self,
        events_or_density: np.ndarray,
        l2: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Run both stages; returns (stage1_mask, final_mask, scores).

        Masks are boolean (K, H/p, W/p) arrays; scores holds each frame's
        stage-2 importance at stage-1-kept cells and 0 elsewhere. Omitting
        `l2` is identical to passing all ones.
        """
        arr = np.asarray(events_or_density)
        if arr.ndim == 2:
            selection = self._run_events(arr, l2)
        elif arr.ndim == 4:
            selection = self._run_densities(arr, l2)
        else:
            raise ValueError(
                f"input must be (N, 4) events or (K, B, H, W) densities, got {arr.ndim} axes"
            )
        return _masks(selection)

    def _run_events(self, events: np.ndarray, l2: np.ndarray | None) -> SelectionResult:
        if events.shape[1] != 4:
            raise ValueError(
                f"events axis 1 must have size 4 for (t, x, y, p), got {events.shape[1]}"
            )
        if not np.issubdtype(events.dtype, np.integer):
            raise TypeError(f"events dtype must be integer, got {events.dtype}")
        cfg = self._config
        if cfg.width is None or cfg.height is None:
            raise ValueError("event-array input needs 'width' and 'height' in the config")
        stream = EventStream(
            events[:, 0], events[:, 1], events[:, 2], events[:, 3], cfg.width, cfg.height
        )
        return run(stream, cfg, l2=l2, threads=resolve_threads(cfg))

    def _run_densities(self, tensor: np.ndarray, l2: np.ndarray | None) -> SelectionResult:
        if tensor.shape[0] < 1:
            raise ValueError("density axis 0 (frames) must be >= 1")
        if not np.issubdtype(tensor.dtype, np.integer):
            raise TypeError(f"density dtype must be integer counts, got {tensor.dtype}")
        cfg = self._config
        bin_duration = cfg.interval_us / tensor.shape[1]
        densities = [DensitySequence(tensor[k], bin_duration) for k in range(tensor.shape[0])]
        return run_from_densities(densities, cfg, l2=l2, threads=resolve_threads(cfg))


def _masks(selection: SelectionResult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    stage1 = np.stack([f.stage1.kept for f in selection.frames])
    final = np.stack([f.final_kept for f in selection.frames])
    scores = np.zeros(stage1.shape, dtype=np.float64)
    for k, frame in enumerate(selection.frames):
        scores[k][frame.stage1.kept] = frame.scores.score
    return stage1, final, scores


def sparsify(
    events_or_density: np.ndarray,
    config: Mapping[str, object] | None = None,
    l2: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-shot form of Session(config).sparsify(...)."""
    return Session(config).sparsify(events_or_density, l2=l2)
