"""Two-stage spatio-temporal token sparsification for event-camera streams.

Stage 1 purifies each frame spatially (continuity scoring, joint weighting,
adaptive threshold); stage 2 prunes tokens whose motion pattern repeats the
previous frame. The package exposes the full pipeline, brute-force oracles,
a synthetic benchmark with ground truth, and a FLOPs savings model.
"""

from .events import (
    DensitySequence,
    Event,
    EventFormatError,
    EventSegment,
    EventStream,
    GeometryError,
    bin_density,
    parse_events,
    segment_stream,
    write_binary,
    write_csv,
)
from .flops import FlopsReport, ModelDims, flops_from_counts, flops_report
from .pgm import pgm_bytes, write_pgm
from .pipeline import PipelineConfig, resolve_threads, run, run_from_densities
from .spatial import (
    ContinuityMaps,
    LifParams,
    Stage1Mask,
    StcParams,
    lif_continuity,
    pool_stc,
    purify,
    spatial_stage,
    stc_map,
)
from .synth import (
    GroundTruth,
    MovingEdge,
    NoiseSpec,
    SceneSpec,
    StaticTexture,
    generate_scene,
    load_noise_spec,
    load_scene_spec,
    stage1_denoise_metrics,
    stage2_redundancy_metrics,
)
from .temporal import (
    FrameSelection,
    RetainedPatches,
    SelectionResult,
    Stage2Scores,
    TtsConfig,
    extract_patches,
    frame_tmr,
    pairwise_mms,
    pairwise_tss,
    select_temporal,
    token_scores,
)

__version__ = "0.1.0"
