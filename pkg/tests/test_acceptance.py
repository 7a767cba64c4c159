"""Acceptance suite: one test per release criterion, each printing a PASS line
at its stated tolerance. Regression values were frozen from the first seeded
benchmark run and must reproduce exactly.

Run with: pytest tests/test_acceptance.py -v -s
"""

import json
import time
import warnings

import numpy as np
import pytest

from pstts.cli import main as cli_main
from pstts.events import (
    BINARY_MAGIC,
    BINARY_RECORD,
    DensitySequence,
    parse_events,
)
from pstts.flops import ModelDims, flops_from_counts
from pstts.oracle import oracle_pool, oracle_stage1, oracle_stc, oracle_tc, oracle_tmr
from pstts.pipeline import PipelineConfig, run, run_from_densities
from pstts.spatial import LifParams, StcParams, spatial_stage
from pstts.synth import (
    default_denoise_scene,
    default_flops_scene,
    default_noise,
    default_redundancy_scene,
    generate_scene,
    stage1_denoise_metrics,
    stage2_redundancy_metrics,
)
from pstts.temporal import RetainedPatches, TtsConfig, frame_tmr, pairwise_mms, pairwise_tss


def _pass(name: str):
    print(f"[ACCEPTANCE] {name}: PASS")


UNIFORMER_DIMS = ModelDims(layers=12, embed_dim=768, mlp_ratio=4.0, frames=8, tokens_per_frame=196)

# frozen on the first seeded benchmark run
FROZEN_DENOISE = {"noise_patches": 456, "noise_drop_rate": 1.0,
                  "active_patches": 56, "active_keep_rate": 1.0}
FROZEN_REDUNDANCY = {"redundant_patches": 112, "redundant_drop_rate": 1.0,
                     "fresh_patches": 56, "fresh_keep_rate": 1.0}
FROZEN_FLOPS_KEEP_RATIO = 43 / 64
FROZEN_FLOPS_REDUCTION = 0.38236227133340384


def test_equation_oracle_suite():
    """Optimized stage 1 vs brute force over 1000 random inputs; frame_tmr vs
    the exhaustive pairwise loop. TC exact, everything else within 1e-9."""
    start = time.time()
    lif, stc = LifParams(), StcParams()
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        bins = int(rng.integers(1, 9))
        density = DensitySequence(rng.integers(0, 6, size=(bins, 8, 8)), 1000.0)
        maps, mask = spatial_stage(density, lif, stc, 4)
        ref_tc = np.array(oracle_tc(density, lif))
        assert np.array_equal(maps.tc, ref_tc), f"tc mismatch at seed {seed}"
        ref_stc = np.array(oracle_stc(ref_tc.tolist(), stc))
        assert np.abs(maps.stc - ref_stc).max() < 1e-9
        ref_down = np.array(oracle_pool(ref_stc.tolist(), 4))
        assert np.abs(maps.stc_down - ref_down).max() < 1e-9
        ref_mask = oracle_stage1(density, lif, stc, 4)
        assert abs(mask.alpha - ref_mask.alpha) < 1e-9

    cfg = TtsConfig()
    for seed in range(200):
        rng = np.random.default_rng(10_000 + seed)
        m_cur = int(rng.integers(1, 17))
        m_prev = int(rng.integers(1, 17))
        cur = rng.random((m_cur, 4, 4)) * 8
        prev = rng.random((m_prev, 4, 4)) * 8
        coords = np.argwhere(np.ones((4, 4), dtype=bool))
        _, _, tmr = frame_tmr(
            RetainedPatches(cur, coords[:m_cur], 2),
            RetainedPatches(prev, coords[:m_prev], 1),
            cfg,
        )
        ref = oracle_tmr(
            [p.ravel().tolist() for p in cur],
            [p.ravel().tolist() for p in prev],
            cfg.epsilon,
        )
        assert np.abs(tmr - np.array(ref)).max() < 1e-9

    elapsed = time.time() - start
    assert elapsed < 30.0, f"oracle suite took {elapsed:.1f}s"
    _pass(f"equation oracle suite ({elapsed:.1f}s)")


def test_metric_identities():
    """Self-similarity identities plus TSS shift/positive-scale invariance
    over 500 random patch pairs within 1e-9."""
    rng = np.random.default_rng(42)
    for _ in range(500):
        a = rng.uniform(0.0, 50.0, size=(16, 16))
        b = rng.uniform(0.0, 50.0, size=(16, 16))
        assert pairwise_mms(a, a) == pytest.approx(1.0, abs=1e-12)
        assert pairwise_tss(a, a) == pytest.approx(1.0, abs=1e-9)
        shift = rng.uniform(-10.0, 10.0)
        scale = rng.uniform(0.1, 10.0)
        base = pairwise_tss(a, b)
        assert pairwise_tss(a + shift, b) == pytest.approx(base, abs=1e-9)
        assert pairwise_tss(scale * a, b) == pytest.approx(base, abs=1e-9)

    cfg = PipelineConfig(bins=4, patch_size=8)
    counts = np.random.default_rng(7).integers(0, 6, size=(4, 32, 32))
    densities = [DensitySequence(counts.copy(), 1000.0) for _ in range(3)]
    sel = run_from_densities(densities, cfg, threads=1)
    for frame in sel.frames[1:]:
        assert (np.abs(frame.scores.tmr) <= 2 * cfg.tts.epsilon).all()
    _pass("metric identities")


def test_synthetic_denoising_regression():
    """Seeded moving-edge + shot-noise + hot-pixel scene: stage 1 must drop
    >= 90% of noise_only patches and keep >= 95% of active patches; the exact
    frozen rates must reproduce."""
    start = time.time()
    scene, noise = default_denoise_scene(), default_noise()
    stream, gt = generate_scene(scene, noise)
    cfg = PipelineConfig(interval_us=scene.frame_interval_us, patch_size=scene.patch_size)
    metrics = stage1_denoise_metrics(gt, run(stream, cfg, threads=1))

    assert metrics["noise_patches"] == FROZEN_DENOISE["noise_patches"]
    assert metrics["active_patches"] == FROZEN_DENOISE["active_patches"]
    assert metrics["noise_drop_rate"] >= 0.90
    assert metrics["active_keep_rate"] >= 0.95
    assert metrics["noise_drop_rate"] == pytest.approx(FROZEN_DENOISE["noise_drop_rate"], abs=1e-12)
    assert metrics["active_keep_rate"] == pytest.approx(FROZEN_DENOISE["active_keep_rate"], abs=1e-12)
    elapsed = time.time() - start
    assert elapsed < 10.0, f"denoising regression took {elapsed:.1f}s"
    _pass(f"synthetic denoising regression ({elapsed:.1f}s)")


def test_synthetic_redundancy_regression():
    """Seeded half-repeating scene: stage 2 must drop >= 90% of redundant
    patches while keeping >= 90% of fresh active patches; frozen rates must
    reproduce."""
    start = time.time()
    scene = default_redundancy_scene()
    stream, gt = generate_scene(scene)
    cfg = PipelineConfig(interval_us=scene.frame_interval_us, patch_size=scene.patch_size)
    metrics = stage2_redundancy_metrics(gt, run(stream, cfg, threads=1))

    assert metrics["redundant_patches"] == FROZEN_REDUNDANCY["redundant_patches"]
    assert metrics["fresh_patches"] == FROZEN_REDUNDANCY["fresh_patches"]
    assert metrics["redundant_drop_rate"] >= 0.90
    assert metrics["fresh_keep_rate"] >= 0.90
    assert metrics["redundant_drop_rate"] == pytest.approx(
        FROZEN_REDUNDANCY["redundant_drop_rate"], abs=1e-12
    )
    assert metrics["fresh_keep_rate"] == pytest.approx(
        FROZEN_REDUNDANCY["fresh_keep_rate"], abs=1e-12
    )
    elapsed = time.time() - start
    assert elapsed < 10.0, f"redundancy regression took {elapsed:.1f}s"
    _pass(f"synthetic redundancy regression ({elapsed:.1f}s)")


def test_flops_cost_model():
    """Linear terms scale by r and the quadratic attention term by r^2 within
    1e-6; zero reduction at full keep; measured keep ratios from the dense
    synthetic scene land the reduction inside the (29%, 44%) band when fed
    with UniformerV2-like dims."""
    d = UNIFORMER_DIMS.embed_dim
    n_dense = UNIFORMER_DIMS.frames * UNIFORMER_DIMS.tokens_per_frame
    linear = UNIFORMER_DIMS.layers * (
        4 * n_dense * d * d + 2 * n_dense * d * UNIFORMER_DIMS.mlp_ratio * d
    )
    quad = UNIFORMER_DIMS.layers * 2 * n_dense * n_dense * d
    for r in (0.25, 0.5, 0.75, 1.0):
        kept = int(r * UNIFORMER_DIMS.tokens_per_frame)
        report = flops_from_counts([kept] * UNIFORMER_DIMS.frames, UNIFORMER_DIMS)
        r_exact = kept * UNIFORMER_DIMS.frames / n_dense
        expected = r_exact * linear + r_exact * r_exact * quad
        assert report.sparse_flops == pytest.approx(expected, rel=1e-6)
    assert flops_from_counts([196] * 8, UNIFORMER_DIMS).reduction == pytest.approx(0.0, abs=1e-12)

    # measured keep ratios from the tuned synthetic run, fed at n = 196
    scene = default_flops_scene()
    stream, _ = generate_scene(scene)
    cfg = PipelineConfig(
        interval_us=scene.frame_interval_us,
        patch_size=scene.patch_size,
        strategy="fixed_ratio",
        fixed_ratio=0.875,
    )
    selection = run(stream, cfg, threads=1)
    assert selection.keep_ratios == [FROZEN_FLOPS_KEEP_RATIO] * 8
    counts = [round(r * UNIFORMER_DIMS.tokens_per_frame) for r in selection.keep_ratios]
    report = flops_from_counts(counts, UNIFORMER_DIMS)
    assert 0.29 < report.reduction < 0.44
    assert report.reduction == pytest.approx(FROZEN_FLOPS_REDUCTION, abs=1e-12)
    _pass(f"flops cost model (reduction {report.reduction:.4f})")


def test_cli_determinism(tmp_path):
    """Two end-to-end CLI runs on identical input and config produce
    byte-identical artifacts, score maps included."""
    scene, noise = default_denoise_scene(), default_noise()
    stream, _ = generate_scene(scene, noise)
    from pstts.events import write_binary

    src = tmp_path / "events.evs"
    write_binary(stream, src)
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("interval_us = 250000\npatch_size = 16\n")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(
            ["run", "--config", str(cfg), "--input", str(src), "--out", str(out), "--maps"]
        )
        assert code == 0
        outs.append(out)
    files_a = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    assert files_a == files_b and files_a
    for rel in files_a:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
    _pass(f"cli determinism ({len(files_a)} artifacts)")


def test_throughput_soft():
    """10^6 events through 8 frames at 224x224 with defaults; a miss is a
    performance warning, not a failure."""
    rng = np.random.default_rng(0)
    n = 1_000_000
    t = np.sort(rng.integers(0, 2_000_000, n))
    t[0], t[-1] = 0, 1_999_999
    rec = np.empty(n, dtype=BINARY_RECORD)
    rec["t"] = t
    rec["x"] = rng.integers(0, 224, n)
    rec["y"] = rng.integers(0, 224, n)
    rec["p"] = rng.integers(0, 2, n) * 2 - 1
    blob = (
        BINARY_MAGIC
        + np.asarray([224, 224], "<u4").tobytes()
        + np.asarray([n], "<u8").tobytes()
        + rec.tobytes()
    )
    start = time.time()
    stream = parse_events(blob, "binary")
    selection = run(stream, PipelineConfig())
    elapsed = time.time() - start
    assert len(selection.frames) == 8
    if elapsed >= 1.0:
        warnings.warn(f"throughput below target: {elapsed:.2f}s for 1e6 events", stacklevel=1)
        _pass(f"throughput soft criterion (SLOW: {elapsed:.2f}s, warning only)")
    else:
        _pass(f"throughput ({elapsed:.2f}s for 1e6 events)")
