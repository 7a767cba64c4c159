import json

import numpy as np
import pytest

from pstts.cli import main
from pstts.events import EventStream, write_binary, write_csv
from pstts.synth import default_denoise_scene, default_noise, generate_scene


@pytest.fixture()
def event_csv(tmp_path):
    rng = np.random.default_rng(12)
    n = 5000
    t = np.sort(rng.integers(0, 1_000_000, n))
    t[0] = 0
    stream = EventStream(
        t, rng.integers(0, 64, n), rng.integers(0, 64, n),
        rng.integers(0, 2, n) * 2 - 1, 64, 64,
    )
    path = tmp_path / "events.csv"
    write_csv(stream, path)
    return path


@pytest.fixture()
def config_toml(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("interval_us = 250000\nbins = 4\npatch_size = 16\n")
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestRunCommand:
    def test_artifacts_and_schema(self, tmp_path, event_csv, config_toml):
        out = tmp_path / "out"
        assert run_cli("run", "--config", config_toml, "--input", event_csv, "--out", out) == 0
        masks = json.loads((out / "masks.json").read_text())
        stats = json.loads((out / "stats.json").read_text())
        assert masks["grid"] == [4, 4]
        assert len(masks["frames"]) == 4
        for frame in masks["frames"]:
            assert set(frame["final"]) <= set(frame["stage1"])
        assert {"frames", "per_frame", "keep_ratio", "flops"} <= stats.keys()
        for row in stats["per_frame"]:
            assert {"m_stage1", "m_final", "alpha", "score_threshold"} <= row.keys()
        assert 0.0 <= stats["keep_ratio"] <= 1.0
        assert stats["flops"]["reduction"] >= 0.0

    def test_byte_identical_reruns(self, tmp_path, event_csv, config_toml):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert run_cli(
                "run", "--config", config_toml, "--input", event_csv, "--out", out, "--maps"
            ) == 0
        for rel in ("masks.json", "stats.json", "maps/frame_0001_tc.pgm",
                    "maps/frame_0002_stc.pgm", "maps/frame_0003_score.pgm"):
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel

    def test_empty_input_keeps_everything(self, tmp_path, config_toml):
        src = tmp_path / "empty.csv"
        src.write_text("# W=64 H=64\n")
        out = tmp_path / "out"
        assert run_cli("run", "--config", config_toml, "--input", src, "--out", out) == 0
        stats = json.loads((out / "stats.json").read_text())
        assert stats["frames"] == 1
        assert stats["keep_ratio"] == 1.0

    def test_maps_written(self, tmp_path, event_csv, config_toml):
        out = tmp_path / "out"
        run_cli("run", "--config", config_toml, "--input", event_csv, "--out", out, "--maps")
        pgm = (out / "maps" / "frame_0001_tc.pgm").read_bytes()
        assert pgm.startswith(b"P5\n64 64\n255\n")
        assert len(pgm) == len(b"P5\n64 64\n255\n") + 64 * 64

    def test_fixed_ratio_flag(self, tmp_path, event_csv, config_toml):
        out = tmp_path / "out"
        assert run_cli("run", "--config", config_toml, "--input", event_csv,
                       "--out", out, "--fixed-ratio", "0.5") == 0
        stats = json.loads((out / "stats.json").read_text())
        for row in stats["per_frame"]:
            assert row["m_final"] == -(-row["m_stage1"] // 2)

    def test_binary_input_detected(self, tmp_path, config_toml):
        scene = default_denoise_scene()
        stream, _ = generate_scene(scene, default_noise())
        src = tmp_path / "events.evs"
        write_binary(stream, src)
        out = tmp_path / "out"
        assert run_cli("run", "--config", config_toml, "--input", src, "--out", out) == 0
        assert json.loads((out / "stats.json").read_text())["keep_ratio"] < 1.0

    def test_missing_input_is_runtime_error(self, tmp_path, config_toml):
        assert run_cli("run", "--config", config_toml, "--input", tmp_path / "nope.csv",
                       "--out", tmp_path / "o") == 1

    def test_unknown_config_key_is_usage_error(self, tmp_path, event_csv):
        bad = tmp_path / "bad.toml"
        bad.write_text("intervall_us = 5\n")
        assert run_cli("run", "--config", bad, "--input", event_csv,
                       "--out", tmp_path / "o") == 2

    def test_malformed_csv_is_parse_error(self, tmp_path, config_toml):
        src = tmp_path / "bad.csv"
        src.write_text("# W=8 H=8\n1,2\n")
        assert run_cli("run", "--config", config_toml, "--input", src,
                       "--out", tmp_path / "o") == 1


def write_scene(path, body):
    path.write_text(body)
    return path


SCENE_TOML = """\
width = 128
height = 128
duration_us = 2000000
seed = 7
frame_interval_us = 250000
patch_size = 16

[[moving_edge]]
x = 32.0
y = 8.0
vx = 0.0
vy = 48.0
length = 64
thickness = 3
rate = 400.0
"""

NOISE_TOML = """\
shot_noise_rate = 3.0
hot_pixel_count = 5
hot_pixel_rate = 2000.0
seed = 11
"""


class TestBenchCommand:
    def test_denoise_scene_passes_bounds(self, tmp_path, capsys):
        scene = write_scene(tmp_path / "scene.toml", SCENE_TOML)
        noise = write_scene(tmp_path / "noise.toml", NOISE_TOML)
        out = tmp_path / "bench"
        assert run_cli("bench", "--scene", scene, "--noise", noise, "--out", out) == 0
        text = capsys.readouterr().out
        assert "noise drop rate" in text
        assert (out / "events.evs").exists()
        gt = json.loads((out / "ground_truth.json").read_text())
        assert gt["grid"] == [8, 8]
        report = json.loads((out / "report.json").read_text())
        assert report["denoise"]["noise_drop_rate"] >= 0.90

    def test_zero_noise_reports_na(self, tmp_path, capsys):
        scene = write_scene(tmp_path / "scene.toml", SCENE_TOML)
        assert run_cli("bench", "--scene", scene) == 0
        assert "N/A" in capsys.readouterr().out

    def test_uniform_noise_flood_violates_bounds(self, tmp_path, capsys):
        # pure high-rate noise spikes every pixel: stage 1 cannot separate it
        scene = write_scene(
            tmp_path / "scene.toml",
            "width = 64\nheight = 64\nduration_us = 1000000\nseed = 2\n"
            "frame_interval_us = 250000\npatch_size = 16\n",
        )
        noise = write_scene(tmp_path / "noise.toml", "shot_noise_rate = 150.0\nseed = 3\n")
        assert run_cli("bench", "--scene", scene, "--noise", noise) == 1
        assert "REGRESSION" in capsys.readouterr().err

    def test_all_static_scene_meets_redundancy_bound(self, capsys):
        from pathlib import Path

        scene = Path(__file__).resolve().parent.parent / "configs" / "static_scene.toml"
        assert run_cli("bench", "--scene", scene) == 0
        out = capsys.readouterr().out
        line = next(l for l in out.splitlines() if l.startswith("redundant drop rate"))
        assert float(line.split()[-1]) >= 0.90

    def test_missing_scene_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            run_cli("bench")
        assert err.value.code == 2


class TestOracleCommand:
    def test_agreement_on_fixture(self, tmp_path, event_csv, config_toml, capsys):
        assert run_cli("oracle", "--input", event_csv, "--config", config_toml) == 0
        assert "tc exact: True" in capsys.readouterr().out
