import subprocess
import sys

import numpy as np
import pytest

from clothgrasp.descriptors import save_model
from clothgrasp.geometry import DepthImage
from clothgrasp.pgm import save_depth_pgm


def run_cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "clothgrasp", *args],
                          capture_output=True, text=True, cwd=cwd)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, trained_model):
    """Synthetic data directory plus a saved model."""
    root = tmp_path_factory.mktemp("cliws")
    data = root / "data"
    for cls in ("pant", "shirt", "tshirt"):
        out = run_cli("synth", "--class", cls, "--seed", "400", "--out",
                      str(data), "--count", "2")
        assert out.returncode == 0, out.stderr
    model_path = root / "model.txt"
    save_model(trained_model, model_path)
    return root


class TestSynth:
    def test_writes_scenes_and_annotations(self, workspace):
        data = workspace / "data"
        assert (data / "pant-00400.pgm").exists()
        assert (data / "pant-00400_mask.pgm").exists()
        assert (data / "annotations.txt").exists()
        text = (data / "annotations.txt").read_text()
        assert text.startswith("grasp-annot v1")
        assert sum(1 for ln in text.splitlines()[1:] if ln.strip()) == 6


class TestTrain:
    def test_trains_and_saves(self, workspace, tmp_path):
        out_model = tmp_path / "m.txt"
        res = run_cli("train", "--annotations", str(workspace / "data" / "annotations.txt"),
                      "--data", str(workspace / "data"), "--out", str(out_model))
        assert res.returncode == 0, res.stderr
        assert "entries 6" in res.stdout
        assert out_model.read_text().startswith("vfh-knn v1 6")


class TestDetect:
    def test_detects_and_prints(self, workspace):
        res = run_cli("detect", "--model", str(workspace / "model.txt"),
                      "--input", str(workspace / "data" / "pant-00400.pgm"))
        assert res.returncode == 0, res.stderr
        lines = dict(ln.split(" ", 1) for ln in res.stdout.splitlines())
        assert lines["label"] in ("WaistPant", "NeckShirt", "NeckTShirt")
        assert len(lines["point_a"].split()) == 2

    def test_byte_identical_runs(self, workspace):
        args = ("detect", "--model", str(workspace / "model.txt"),
                "--input", str(workspace / "data" / "shirt-00401.pgm"))
        r1, r2 = run_cli(*args), run_cli(*args)
        assert r1.returncode == r2.returncode == 0
        assert r1.stdout.encode() == r2.stdout.encode()

    def test_dump_maps(self, workspace, tmp_path):
        maps = tmp_path / "maps"
        res = run_cli("detect", "--model", str(workspace / "model.txt"),
                      "--input", str(workspace / "data" / "pant-00401.pgm"),
                      "--dump-maps", str(maps))
        assert res.returncode == 0, res.stderr
        assert (maps / "entropy.pgm").exists()
        assert (maps / "vesselness.pgm").exists()
        assert (maps / "overlay.png").exists()

    def test_no_detection_exit_code(self, workspace, tmp_path):
        flat = tmp_path / "flat.pgm"
        save_depth_pgm(DepthImage.from_array(np.full((80, 100), 1.3)), flat)
        res = run_cli("detect", "--model", str(workspace / "model.txt"),
                      "--input", str(flat))
        assert res.returncode == 3
        assert "NoDetection" in res.stdout


class TestWrinkle:
    def test_prints_indices(self, workspace):
        res = run_cli("wrinkle", "--input", str(workspace / "data" / "tshirt-00400.pgm"),
                      "--mask", str(workspace / "data" / "tshirt-00400_mask.pgm"))
        assert res.returncode == 0, res.stderr
        lines = res.stdout.splitlines()
        assert lines[0].startswith("roughness_mean ")
        assert lines[1].startswith("roughness_entropy ")
        float(lines[0].split()[1])


class TestEval:
    def test_writes_report(self, workspace, tmp_path):
        report = tmp_path / "report.txt"
        res = run_cli("eval", "--model", str(workspace / "model.txt"),
                      "--annotations", str(workspace / "data" / "annotations.txt"),
                      "--data", str(workspace / "data"),
                      "--report", str(report))
        assert res.returncode == 0, res.stderr
        text = report.read_text()
        assert text.startswith("grasp-eval v1")
        assert "Pant" in text and "confusion" in text


class TestExitCodes:
    def test_usage_error_is_1(self):
        res = run_cli("detect", "--model")
        assert res.returncode == 1

    def test_unknown_command_is_1(self):
        res = run_cli("fold")
        assert res.returncode == 1

    def test_parse_error_is_2(self, workspace, tmp_path):
        bad = tmp_path / "bad.pcd"
        bad.write_bytes(b"VERSION .5\nFIELDS x y z\nDATA ascii\n")
        res = run_cli("detect", "--model", str(workspace / "model.txt"),
                      "--input", str(bad))
        assert res.returncode == 2

    def test_bad_model_is_2(self, workspace, tmp_path):
        bad = tmp_path / "model.txt"
        bad.write_text("not a model\n")
        res = run_cli("detect", "--model", str(bad),
                      "--input", str(workspace / "data" / "pant-00400.pgm"))
        assert res.returncode == 2
