"""Transformer-block FLOPs model driven by measured token keep counts.

Generic ViT-style accounting over the full spatio-temporal token sequence:
per block, attention costs 4*N*d^2 + 2*N^2*d and the MLP 2*N*d*(m*d) for N
tokens. The model quantifies relative savings only; it does not mimic any
specific backbone's internals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from .temporal import SelectionResult

__all__ = ["ModelDims", "FlopsReport", "block_flops", "flops_from_counts", "flops_report"]


@dataclass(frozen=True)
class ModelDims:
    """Backbone shape the cost model assumes."""

    layers: int = 12
    embed_dim: int = 768
    mlp_ratio: float = 4.0
    frames: int = 8
    tokens_per_frame: int = 196

    def __post_init__(self):
        for name in ("layers", "embed_dim", "mlp_ratio", "frames", "tokens_per_frame"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class FlopsReport:
    """Modeled compute for the kept tokens against the dense baseline."""

    kept_per_frame: tuple[int, ...]
    tokens_kept: int
    tokens_dense: int
    sparse_flops: float
    dense_flops: float

    @property
    def reduction(self) -> float:
        """Fraction of the dense baseline saved, in [0, 1)."""
        return 1.0 - self.sparse_flops / self.dense_flops

    def to_dict(self) -> dict:
        return {
            "kept_per_frame": list(self.kept_per_frame),
            "tokens_kept": self.tokens_kept,
            "tokens_dense": self.tokens_dense,
            "sparse_flops": self.sparse_flops,
            "dense_flops": self.dense_flops,
            "reduction": self.reduction,
        }


def block_flops(n_tokens: int, dims: ModelDims) -> float:
    """One transformer block over an n-token sequence."""
    d = float(dims.embed_dim)
    n = float(n_tokens)
    attention = 4.0 * n * d * d + 2.0 * n * n * d
    mlp = 2.0 * n * d * (dims.mlp_ratio * d)
    return attention + mlp


def flops_from_counts(kept_per_frame: Sequence[int], dims: ModelDims) -> FlopsReport:
    """Build the report from per-frame kept-token counts."""
    counts = tuple(int(c) for c in kept_per_frame)
    if any(c < 0 for c in counts):
        raise ValueError("kept counts must be non-negative")
    n_kept = sum(counts)
    n_dense = dims.frames * dims.tokens_per_frame
    return FlopsReport(
        kept_per_frame=counts,
        tokens_kept=n_kept,
        tokens_dense=n_dense,
        sparse_flops=dims.layers * block_flops(n_kept, dims),
        dense_flops=dims.layers * block_flops(n_dense, dims),
    )


def flops_report(selection: "SelectionResult", dims: ModelDims) -> FlopsReport:
    """Report for a pipeline run; the selection must cover dims.frames frames."""
    counts = selection.kept_counts
    if len(counts) != dims.frames:
        raise ValueError(f"selection covers {len(counts)} frames, model dims expect {dims.frames}")
    return flops_from_counts(counts, dims)
