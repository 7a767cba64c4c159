"""Command-line pipeline runner.

    pstts run    --config cfg.toml --input events.evs --out out/ [--maps]
    pstts bench  --scene scene.toml [--noise noise.toml] [--out out/]
    pstts oracle --input events.evs [--config cfg.toml]

`run` emits masks.json, stats.json and optional per-frame PGM score maps;
`bench` scores the pipeline against synthetic ground truth and fails on
regression-bound violations; `oracle` cross-checks the optimized stage-1 path
against the brute-force reference.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import oracle as oracle_mod
from .config import load_toml
from .events import (
    EventFormatError,
    EventStream,
    GeometryError,
    bin_density,
    parse_events,
    segment_stream,
    write_binary,
)
from .flops import flops_report
from .pgm import write_pgm
from .pipeline import PipelineConfig, resolve_threads, run
from .synth import (
    generate_scene,
    load_noise_spec,
    load_scene_spec,
    stage1_denoise_metrics,
    stage2_redundancy_metrics,
)
from .temporal import SelectionResult

# minimum rates the bench subcommand enforces; the denoising pair applies to
# scenes with noise_only patches, the redundancy pair to scenes with redundant
# patches (None-valued metrics are skipped)
DENOISE_BOUNDS = {"noise_drop_rate": 0.90, "active_keep_rate": 0.95}
REDUNDANCY_BOUNDS = {"redundant_drop_rate": 0.90, "fresh_keep_rate": 0.90}


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_mapping(load_toml(path))


def _read_stream(path: str, config: PipelineConfig) -> EventStream:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    fmt = "binary" if magic == b"EVS1" else "csv"
    return parse_events(path, fmt, width=config.width, height=config.height)


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def masks_dict(selection: SelectionResult) -> dict:
    """Row-major kept-cell indices per frame, both stages."""
    hp, wp = selection.grid_shape
    return {
        "grid": [hp, wp],
        "frames": [
            {
                "stage1": np.flatnonzero(f.stage1.kept.ravel()).tolist(),
                "final": np.flatnonzero(f.final_kept.ravel()).tolist(),
            }
            for f in selection.frames
        ],
    }


def stats_dict(selection: SelectionResult, config: PipelineConfig) -> dict:
    hp, wp = selection.grid_shape
    dims = config.model_dims(frames=len(selection.frames), tokens_per_frame=hp * wp)
    report = flops_report(selection, dims)
    return {
        "frames": len(selection.frames),
        "grid": [hp, wp],
        "per_frame": [
            {
                "m_stage1": f.stage1.kept_count,
                "m_final": f.kept_count,
                "alpha": f.stage1.alpha,
                "score_threshold": f.score_threshold,
                "keep_ratio": f.keep_ratio,
            }
            for f in selection.frames
        ],
        "keep_ratio": selection.overall_keep_ratio,
        "flops": report.to_dict(),
    }


def _score_grid(frame) -> np.ndarray:
    grid = np.zeros(frame.stage1.kept.shape)
    grid[frame.stage1.kept] = frame.scores.score
    return grid


def _write_artifacts(selection: SelectionResult, config: PipelineConfig, out: Path, maps: bool):
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "masks.json", masks_dict(selection))
    _dump_json(out / "stats.json", stats_dict(selection, config))
    if maps:
        maps_dir = out / "maps"
        maps_dir.mkdir(exist_ok=True)
        for f in selection.frames:
            stem = f"frame_{f.index:04d}"
            write_pgm(maps_dir / f"{stem}_tc.pgm", f.maps.tc)
            write_pgm(maps_dir / f"{stem}_stc.pgm", f.maps.stc)
            write_pgm(maps_dir / f"{stem}_stc_down.pgm", f.maps.stc_down)
            write_pgm(maps_dir / f"{stem}_score.pgm", _score_grid(f))


def _cmd_run(args) -> int:
    config = _load_config(args.config)
    if args.fixed_ratio is not None:
        config = config.with_overrides(strategy="fixed_ratio", fixed_ratio=args.fixed_ratio)
    stream = _read_stream(args.input, config)
    selection = run(stream, config, threads=resolve_threads(config, args.threads))
    out = Path(args.out or config.out_dir or ".")
    _write_artifacts(selection, config, out, args.maps)
    print(f"{len(selection.frames)} frames, keep ratio {selection.overall_keep_ratio:.4f}")
    return 0


def _fmt_rate(value) -> str:
    return "N/A" if value is None else f"{value:.4f}"


def _cmd_bench(args) -> int:
    scene = load_scene_spec(args.scene)
    noise = load_noise_spec(args.noise) if args.noise else None
    config = _load_config(args.config).with_overrides(
        interval_us=scene.frame_interval_us,
        patch_size=scene.patch_size,
        width=scene.width,
        height=scene.height,
    )
    stream, gt = generate_scene(scene, noise)
    selection = run(stream, config, threads=resolve_threads(config, args.threads))
    denoise = stage1_denoise_metrics(gt, selection)
    redundancy = stage2_redundancy_metrics(gt, selection)
    hp, wp = selection.grid_shape
    report = flops_report(
        selection, config.model_dims(frames=len(selection.frames), tokens_per_frame=hp * wp)
    )

    print(f"scene: {args.scene} ({len(stream)} events, {len(selection.frames)} frames)")
    print(f"noise drop rate:     {_fmt_rate(denoise['noise_drop_rate'])}")
    print(f"noise precision:     {_fmt_rate(denoise['noise_precision'])}")
    print(f"active keep rate:    {_fmt_rate(denoise['active_keep_rate'])}")
    print(f"redundant drop rate: {_fmt_rate(redundancy['redundant_drop_rate'])}")
    print(f"redundancy precision:{_fmt_rate(redundancy['redundancy_precision'])}")
    print(f"fresh keep rate:     {_fmt_rate(redundancy['fresh_keep_rate'])}")
    print(f"keep ratio:          {selection.overall_keep_ratio:.4f}")
    print(f"flops reduction:     {report.reduction:.4f}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_binary(stream, out / "events.evs")
        _dump_json(out / "ground_truth.json", gt.to_dict())
        _dump_json(
            out / "report.json",
            {
                "denoise": denoise,
                "redundancy": redundancy,
                "keep_ratio": selection.overall_keep_ratio,
                "flops": report.to_dict(),
            },
        )

    failures = []
    checked = {}
    if denoise["noise_patches"]:
        checked.update({k: (denoise[k], b) for k, b in DENOISE_BOUNDS.items()})
    if redundancy["redundant_patches"]:
        checked.update({k: (redundancy[k], b) for k, b in REDUNDANCY_BOUNDS.items()})
    for key, (value, bound) in checked.items():
        if value is not None and value < bound:
            failures.append(f"{key} {value:.4f} < {bound}")
    for line in failures:
        print(f"REGRESSION: {line}", file=sys.stderr)
    return 1 if failures else 0


def _cmd_oracle(args) -> int:
    config = _load_config(args.config)
    stream = _read_stream(args.input, config)
    segments = segment_stream(stream, config.interval_us)
    if config.frames is not None:
        segments = segments[: config.frames]
    worst_stc = 0.0
    tc_ok = True
    from .spatial import spatial_stage

    for seg in segments:
        density = bin_density(seg, config.bins, stream.width, stream.height)
        maps, mask = spatial_stage(density, config.lif, config.stc, config.patch_size)
        ref_tc = np.array(oracle_mod.oracle_tc(density, config.lif))
        ref_stc = np.array(oracle_mod.oracle_stc(ref_tc.tolist(), config.stc))
        tc_ok &= bool(np.array_equal(maps.tc, ref_tc))
        worst_stc = max(worst_stc, float(np.abs(maps.stc - ref_stc).max()))
        ref_mask = oracle_mod.oracle_stage1(density, config.lif, config.stc, config.patch_size)
        worst_stc = max(worst_stc, abs(mask.alpha - ref_mask.alpha))
    print(f"tc exact: {tc_ok}; worst stc/alpha deviation: {worst_stc:.3e}")
    if not tc_ok or worst_stc > 1e-9:
        print("ORACLE MISMATCH", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pstts", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the two-stage pipeline on an event file")
    p_run.add_argument("--config", help="TOML pipeline config")
    p_run.add_argument("--input", required=True, help="event file (CSV or EVS1 binary)")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--maps", action="store_true", help="write PGM score maps")
    p_run.add_argument("--fixed-ratio", type=float, dest="fixed_ratio",
                       help="use fixed-ratio selection with this keep ratio")
    p_run.add_argument("--threads", type=int, help="worker pool size")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="run a synthetic scene against its ground truth")
    p_bench.add_argument("--scene", required=True, help="scene spec TOML")
    p_bench.add_argument("--noise", help="noise spec TOML")
    p_bench.add_argument("--config", help="TOML pipeline config overrides")
    p_bench.add_argument("--out", help="where to write events, ground truth and report")
    p_bench.add_argument("--threads", type=int, help="worker pool size")
    p_bench.set_defaults(func=_cmd_bench)

    p_oracle = sub.add_parser("oracle", help="check the optimized path against the oracle")
    p_oracle.add_argument("--input", required=True, help="event file (CSV or EVS1 binary)")
    p_oracle.add_argument("--config", help="TOML pipeline config")
    p_oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EventFormatError, GeometryError, OSError) as exc:
        print(f"pstts: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:  # config violations are usage errors
        print(f"pstts: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
