"""8-bit PGM export for score maps (min-max normalized per map)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["pgm_bytes", "write_pgm"]


def pgm_bytes(values: np.ndarray) -> bytes:
    """Binary (P5) PGM of a 2-D map, stretched to 0..255; flat maps render black."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D map, got shape {values.shape}")
    lo = values.min()
    hi = values.max()
    if hi > lo:
        scaled = np.round((values - lo) * (255.0 / (hi - lo)))
    else:
        scaled = np.zeros_like(values)
    h, w = values.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    return header + scaled.astype(np.uint8).tobytes()


def write_pgm(path: str | Path, values: np.ndarray) -> None:
    Path(path).write_bytes(pgm_bytes(values))
