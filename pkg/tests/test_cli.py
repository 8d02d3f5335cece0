"""End-to-end command-line behavior: exit codes, artifacts, manifests, CSV shapes."""

import math
import shutil

import numpy as np
import pytest

from patchmask import cli
from patchmask.imagery import (
    load_image,
    load_mask,
    save_feature_stack,
    save_image,
)
from patchmask.metrics import extract_builtin_features


def run_cli(*argv) -> int:
    return cli.main(list(argv))


def synth_scene(out_dir, num_views=4, extra=()) -> None:
    code = run_cli(
        "synth",
        "--out-dir",
        str(out_dir),
        "--height",
        "48",
        "--width",
        "48",
        "--num-views",
        str(num_views),
        "--distractor-view-fraction",
        "0.5",
        "--distractors-min",
        "1",
        "--distractors-max",
        "2",
        "--size-min",
        "8",
        "--size-max",
        "16",
        "--noise-sigma",
        "0.01",
        "--seed",
        "3",
        *extra,
    )
    assert code == 0


def read_manifest(path):
    entries = {}
    for line in path.read_text().splitlines():
        key, value = line.split("=", 1)
        entries[key] = value
    return entries


class TestSynthCommand:
    def test_artifacts_and_manifest(self, tmp_path):
        out = tmp_path / "scene"
        synth_scene(out)
        names = [f"view_{i:04d}.png" for i in range(4)]
        names += [f"gtmask_{i:04d}.png" for i in range(4)]
        names += ["clean.png"]
        for name in names:
            assert (out / name).is_file(), name
        entries = read_manifest(out / "manifest.txt")
        assert entries["command"] == "synth"
        assert entries["num_views"] == "4"
        assert entries["seed"] == "3"
        for name in names:
            assert f"checksum.{name}" in entries

    def test_num_views_one_rejected_without_artifacts(self, tmp_path, capsys):
        out = tmp_path / "scene"
        code = run_cli("synth", "--out-dir", str(out), "--num-views", "1")
        assert code == 2
        assert "num_views" in capsys.readouterr().err
        assert not out.exists()

    def test_same_flags_give_identical_checksums(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        synth_scene(a)
        synth_scene(b)
        ea = {k: v for k, v in read_manifest(a / "manifest.txt").items() if k.startswith("checksum.")}
        eb = {k: v for k, v in read_manifest(b / "manifest.txt").items() if k.startswith("checksum.")}
        assert ea == eb

    def test_manifest_replay_reproduces_scene(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        synth_scene(a)
        code = run_cli("synth", "--config", str(a / "manifest.txt"), "--out-dir", str(b))
        assert code == 0
        ea = {k: v for k, v in read_manifest(a / "manifest.txt").items() if k.startswith("checksum.")}
        eb = {k: v for k, v in read_manifest(b / "manifest.txt").items() if k.startswith("checksum.")}
        assert ea == eb

    def test_flag_overrides_config_file(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        synth_scene(a)
        code = run_cli(
            "synth", "--config", str(a / "manifest.txt"), "--out-dir", str(b), "--seed", "99"
        )
        assert code == 0
        assert read_manifest(b / "manifest.txt")["seed"] == "99"
        ca = read_manifest(a / "manifest.txt")["checksum.clean.png"]
        cb = read_manifest(b / "manifest.txt")["checksum.clean.png"]
        assert ca != cb

    def test_malformed_config_line_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("height=48\nthis line has no equals sign\n")
        code = run_cli("synth", "--config", str(cfg), "--out-dir", str(tmp_path / "o"))
        assert code == 2
        assert "key=value" in capsys.readouterr().err

    def test_io_failure_exits_one(self, tmp_path, capsys):
        blocker = tmp_path / "blocker"
        blocker.write_text("a regular file")
        code = run_cli("synth", "--out-dir", str(blocker / "nested"))
        assert code == 1


class TestTrainCommand:
    @pytest.fixture()
    def scene(self, tmp_path):
        out = tmp_path / "scene"
        synth_scene(out)
        return out

    def _train(self, scene, out, *extra):
        return run_cli(
            "train",
            "--scene",
            str(scene / "manifest.txt"),
            "--out-dir",
            str(out),
            "--steps",
            "25",
            "--warmup-steps",
            "5",
            "--mask-update-interval",
            "10",
            "--patch-size",
            "8",
            "--log-interval",
            "10",
            *extra,
        )

    def test_artifacts_history_rows_and_manifest(self, tmp_path, scene):
        out = tmp_path / "run"
        assert self._train(scene, out) == 0
        assert (out / "final.png").is_file()
        for i in range(4):
            assert (out / f"mask_{i:04d}.png").is_file()
        rows = (out / "history.csv").read_text().splitlines()
        assert rows[0] == "step,loss,psnr,static_fraction"
        assert len(rows) - 1 == math.ceil(25 / 10)
        entries = read_manifest(out / "manifest.txt")
        assert entries["metric_mode"] == "hybrid"
        assert entries["patch_size"] == "8"
        assert entries["mask_update_steps"] == "5,15"

    def test_records_explicit_mode_and_patch(self, tmp_path, scene):
        out = tmp_path / "run"
        assert self._train(scene, out, "--metric-mode", "photometric-gmm") == 0
        entries = read_manifest(out / "manifest.txt")
        assert entries["metric_mode"] == "photometric-gmm"

    def test_warmup_longer_than_steps_warns_and_keeps_all_ones(self, tmp_path, scene, capsys):
        out = tmp_path / "run"
        code = run_cli(
            "train",
            "--scene",
            str(scene / "manifest.txt"),
            "--out-dir",
            str(out),
            "--steps",
            "6",
            "--warmup-steps",
            "10",
            "--log-interval",
            "2",
        )
        assert code == 0
        assert "warmup" in capsys.readouterr().err.lower()
        for i in range(4):
            assert np.all(load_mask(out / f"mask_{i:04d}.png") == 1)
        entries = read_manifest(out / "manifest.txt")
        assert entries["mask_update_steps"] == ""

    def test_missing_scene_manifest_exits_two(self, tmp_path, capsys):
        code = run_cli(
            "train", "--scene", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path / "o")
        )
        assert code == 2

    def test_deterministic_final_image(self, tmp_path, scene):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._train(scene, a) == 0
        assert self._train(scene, b) == 0
        assert (a / "final.png").read_bytes() == (b / "final.png").read_bytes()

    def test_replay_from_manifest(self, tmp_path, scene):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._train(scene, a) == 0
        code = run_cli("train", "--config", str(a / "manifest.txt"), "--out-dir", str(b))
        assert code == 0
        ea = read_manifest(a / "manifest.txt")
        eb = read_manifest(b / "manifest.txt")
        assert ea["checksum.final.png"] == eb["checksum.final.png"]
        assert ea["checksum.history.csv"] == eb["checksum.history.csv"]

    def test_invalid_patch_size_exits_two_without_out_dir(self, tmp_path, scene):
        out = tmp_path / "run"
        code = self._train(scene, out, "--patch-size", "0")
        assert code == 2
        assert not out.exists()


class TestMaskCommand:
    def _pairs(self, tmp_path, count=4):
        scene = tmp_path / "scene"
        synth_scene(scene, num_views=count)
        rendered = tmp_path / "rendered"
        reference = tmp_path / "reference"
        rendered.mkdir()
        reference.mkdir()
        clean = load_image(scene / "clean.png")
        for i in range(count):
            save_image(clean, rendered / f"img_{i:02d}.png")
            shutil.copy(scene / f"view_{i:04d}.png", reference / f"img_{i:02d}.png")
        return rendered, reference

    def test_writes_masks_and_manifest(self, tmp_path):
        rendered, reference = self._pairs(tmp_path)
        out = tmp_path / "masks"
        code = run_cli(
            "mask",
            "--rendered-dir",
            str(rendered),
            "--reference-dir",
            str(reference),
            "--out-dir",
            str(out),
            "--patch-size",
            "8",
            "--metric-mode",
            "hybrid",
        )
        assert code == 0
        for i in range(4):
            mask = load_mask(out / f"mask_{i:04d}.png")
            assert mask.shape == (48, 48)
        entries = read_manifest(out / "manifest.txt")
        assert entries["metric_mode"] == "hybrid"
        assert entries["feature_source"] == "builtin"

    def test_fstk_feature_dir_matches_builtin(self, tmp_path):
        rendered, reference = self._pairs(tmp_path)
        feats = tmp_path / "feats"
        feats.mkdir()
        for i, p in enumerate(sorted(reference.iterdir())):
            save_feature_stack(
                extract_builtin_features(load_image(p), 3), feats / f"feat_{i:04d}.fstk"
            )
        out_b = tmp_path / "masks_builtin"
        out_f = tmp_path / "masks_fstk"
        base = [
            "mask",
            "--rendered-dir",
            str(rendered),
            "--reference-dir",
            str(reference),
            "--patch-size",
            "8",
            "--metric-mode",
            "hybrid",
        ]
        assert run_cli(*base, "--out-dir", str(out_b)) == 0
        assert run_cli(*base, "--out-dir", str(out_f), "--feature-dir", str(feats)) == 0
        for i in range(4):
            a = load_mask(out_b / f"mask_{i:04d}.png")
            b = load_mask(out_f / f"mask_{i:04d}.png")
            np.testing.assert_array_equal(a, b)
        assert read_manifest(out_f / "manifest.txt")["feature_source"] == "fstk"

    def test_count_mismatch_exits_two(self, tmp_path, capsys):
        rendered, reference = self._pairs(tmp_path)
        (sorted(rendered.iterdir())[0]).unlink()
        code = run_cli(
            "mask",
            "--rendered-dir",
            str(rendered),
            "--reference-dir",
            str(reference),
            "--out-dir",
            str(tmp_path / "masks"),
        )
        assert code == 2
        assert "counts differ" in capsys.readouterr().err

    def test_empty_dir_exits_two(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = run_cli(
            "mask",
            "--rendered-dir",
            str(empty),
            "--reference-dir",
            str(empty),
            "--out-dir",
            str(tmp_path / "masks"),
        )
        assert code == 2


class TestEvalCommand:
    def _run(self, tmp_path):
        scene = tmp_path / "scene"
        synth_scene(scene)
        run_dir = tmp_path / "run"
        code = run_cli(
            "train",
            "--scene",
            str(scene / "manifest.txt"),
            "--out-dir",
            str(run_dir),
            "--steps",
            "20",
            "--warmup-steps",
            "5",
            "--mask-update-interval",
            "5",
            "--patch-size",
            "8",
        )
        assert code == 0
        return scene, run_dir

    def test_header_and_file(self, tmp_path, capsys):
        scene, run_dir = self._run(tmp_path)
        capsys.readouterr()  # drain synth/train chatter
        code = run_cli("eval", "--run-dir", str(run_dir), "--scene", str(scene / "manifest.txt"))
        assert code == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "psnr,ssim,mask_iou,static_fraction"
        assert (run_dir / "eval.csv").read_text() == out

    def test_eval_twice_identical_bytes(self, tmp_path, capsys):
        scene, run_dir = self._run(tmp_path)
        assert run_cli("eval", "--run-dir", str(run_dir), "--scene", str(scene / "manifest.txt")) == 0
        first = (run_dir / "eval.csv").read_bytes()
        assert run_cli("eval", "--run-dir", str(run_dir), "--scene", str(scene / "manifest.txt")) == 0
        assert (run_dir / "eval.csv").read_bytes() == first

    def test_perfect_model_hits_psnr_cap(self, tmp_path, capsys):
        scene = tmp_path / "scene"
        synth_scene(scene)
        run_dir = tmp_path / "run"
        run_dir.mkdir()
        shutil.copy(scene / "clean.png", run_dir / "final.png")
        for i in range(4):
            shutil.copy(scene / f"gtmask_{i:04d}.png", run_dir / f"mask_{i:04d}.png")
        capsys.readouterr()  # drain synth chatter
        code = run_cli("eval", "--run-dir", str(run_dir), "--scene", str(scene / "manifest.txt"))
        assert code == 0
        row = capsys.readouterr().out.splitlines()[1].split(",")
        assert row[0] == "99"
        assert float(row[1]) == pytest.approx(1.0)
        assert float(row[2]) == pytest.approx(1.0)

    def test_missing_final_image_exits_two(self, tmp_path, capsys):
        scene = tmp_path / "scene"
        synth_scene(scene)
        empty = tmp_path / "empty"
        empty.mkdir()
        code = run_cli("eval", "--run-dir", str(empty), "--scene", str(scene / "manifest.txt"))
        assert code == 2
        assert "final" in capsys.readouterr().err


class TestSweepCommand:
    @pytest.fixture()
    def scene(self, tmp_path):
        out = tmp_path / "scene"
        synth_scene(out, num_views=8, extra=("--height", "64", "--width", "64"))
        return out

    def _sweep(self, scene, out, axis, values):
        return run_cli(
            "sweep",
            "--scene",
            str(scene / "manifest.txt"),
            "--out-dir",
            str(out),
            "--axis",
            axis,
            "--values",
            values,
            "--steps",
            "6",
            "--warmup-steps",
            "2",
            "--mask-update-interval",
            "2",
            "--patch-size",
            "8",
        )

    def test_patch_size_sweep_row_count(self, tmp_path, scene):
        out = tmp_path / "sw"
        assert self._sweep(scene, out, "patch-size", "1,8,16,64") == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == "axis,value,psnr,ssim,mask_iou"
        assert len(rows) == 1 + 4
        assert [r.split(",")[1] for r in rows[1:]] == ["1", "8", "16", "64"]

    def test_metric_mode_sweep_covers_all_modes(self, tmp_path, scene):
        out = tmp_path / "sw"
        modes = "photometric-gmm,perceptual-gmm,perceptual-percentile,hybrid"
        assert self._sweep(scene, out, "metric-mode", modes) == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert [r.split(",")[1] for r in rows[1:]] == modes.split(",")

    def test_repeated_sweep_identical_csv(self, tmp_path, scene):
        a, b = tmp_path / "a", tmp_path / "b"
        assert self._sweep(scene, a, "warmup-steps", "0,4") == 0
        assert self._sweep(scene, b, "warmup-steps", "0,4") == 0
        assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()

    def test_empty_values_exit_two(self, tmp_path, scene, capsys):
        code = self._sweep(scene, tmp_path / "sw", "patch-size", " , ")
        assert code == 2
        assert "at least one" in capsys.readouterr().err

    def test_unknown_axis_rejected_by_parser(self, tmp_path, scene):
        with pytest.raises(SystemExit) as exc:
            self._sweep(scene, tmp_path / "sw", "learning-rate", "1,2")
        assert exc.value.code == 2

    def test_invalid_axis_value_exits_two(self, tmp_path, scene):
        code = self._sweep(scene, tmp_path / "sw", "metric-mode", "hybrid,bogus")
        assert code == 2


class TestParser:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli("--version")
        assert exc.value.code == 0
        assert "patchmask" in capsys.readouterr().out

    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as exc:
            run_cli()
        assert exc.value.code == 2
