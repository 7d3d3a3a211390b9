import csv
import io
import json

import numpy as np
import pytest

from p4ip.cli import main
from p4ip.imaging import load_raster, save_raster
from p4ip.solver import anscombe_matching_offset


def run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def noisy(tmp_path, capsys):
    out = tmp_path / "noisy.rast"
    code, _, _ = run(["--seed", 3, "degrade", "synthetic:shapes:32", out, "--peak", 4,
                      "--reference-out", tmp_path / "ref.rast"], capsys)
    assert code == 0
    return out


def test_degrade_writes_sidecar(noisy):
    meta = json.loads((noisy.parent / "noisy.rast.json").read_text())
    assert meta["peak"] == 4 and meta["seed"] == 3 and meta["kernel"] == "none"
    assert (meta["width"], meta["height"]) == (32, 32)
    assert load_raster(meta["reference"]).max() == 4.0


def test_degrade_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(["--seed", 9, "degrade", "synthetic:disk:24", tmp_path / f"{name}.rast", "--peak", 2,
             "--kernel", "uniform9"], capsys)
    assert (tmp_path / "a.rast").read_bytes() == (tmp_path / "b.rast").read_bytes()


def test_degrade_rejects_zero_peak(tmp_path, capsys):
    code, _, err = run(["degrade", "synthetic:disk:24", tmp_path / "x.rast", "--peak", 0], capsys)
    assert code == 1 and "positive" in err


def test_missing_input_is_data_error(tmp_path, capsys):
    code, _, _ = run(["degrade", tmp_path / "missing.pgm", tmp_path / "x.rast", "--peak", 1], capsys)
    assert code == 2


@pytest.mark.parametrize("method", ["p4ip", "p4ip-bin", "anscombe"])
def test_restore_methods(noisy, tmp_path, capsys, method):
    out = tmp_path / f"{method}.rast"
    code, text, _ = run(["restore", noisy, out, "--method", method, "--denoiser", "gauss",
                         "--iters", 5], capsys)
    assert code == 0
    row = next(csv.DictReader(io.StringIO(text)))
    assert row["method"] == method and row["status"] == "ok"
    assert float(row["psnr"]) > float(row["psnr_noisy"])
    assert load_raster(out).shape == (32, 32)


def test_restore_multi_prior_report(noisy, tmp_path, capsys):
    report = tmp_path / "report.csv"
    for _ in range(2):
        code, _, _ = run(["restore", noisy, tmp_path / "m.rast", "--method", "m-p4ip",
                          "--denoiser", "gauss", "--denoiser", "nlm", "--beta", 1, "--beta", 2,
                          "--iters", 3, "--report", report], capsys)
        assert code == 0
    rows = list(csv.DictReader(report.open()))
    assert len(rows) == 2 and rows[0]["denoiser"] == "gauss+nlm"


def test_baseline(noisy, tmp_path, capsys):
    code, text, _ = run(["baseline", noisy, tmp_path / "b.rast", "--denoiser", "gauss"], capsys)
    assert code == 0 and ",anscombe," in text


def test_restore_needs_peak_without_sidecar(tmp_path, capsys):
    save_raster(np.ones((8, 8)), tmp_path / "bare.rast")
    code, _, err = run(["restore", tmp_path / "bare.rast", tmp_path / "o.rast"], capsys)
    assert code == 1 and "--peak" in err


def test_restore_solver_failure(tmp_path, capsys):
    save_raster(np.ones((8, 8)), tmp_path / "bare.rast")
    spec = tmp_path / "bad.ini"
    spec.write_text("[denoiser]\nexecutable = /bin/false\n")
    code, _, _ = run(["restore", tmp_path / "bare.rast", tmp_path / "o.rast", "--peak", 1,
                      "--denoiser", f"ext:{spec}", "--iters", 2], capsys)
    assert code == 3


def test_eval(tmp_path, capsys):
    ref = np.zeros((4, 4))
    save_raster(ref, tmp_path / "r.rast")
    save_raster(ref + 0.1, tmp_path / "t.rast")
    code, out, _ = run(["eval", tmp_path / "r.rast", tmp_path / "r.rast", "--peak-max", 1], capsys)
    assert (code, out.strip()) == (0, "inf")
    code, out, _ = run(["eval", tmp_path / "r.rast", tmp_path / "t.rast", "--peak-max", 1], capsys)
    assert (code, out.strip()) == (0, "20.00")


def test_curve(tmp_path, capsys):
    code, _, _ = run(["curve", "--y-max", 2, "--step", 0.5, "--out", tmp_path / "c.csv"], capsys)
    assert code == 0
    rows = list(csv.reader((tmp_path / "c.csv").open()))
    assert rows[0][:2] == ["y", "anscombe"] and len(rows[0]) == 6
    assert [r[0] for r in rows[1:]] == ["0", "0.5", "1", "1.5", "2"]
    offset = 2 * np.sqrt(3 / 8)
    for r in rows[1:]:
        assert float(r[2]) - float(r[1]) == pytest.approx(offset, abs=1e-10)
    assert rows[0][2] == f"p4ip_vmu={anscombe_matching_offset():.6g}"


def test_bad_flag_is_usage_error(capsys):
    assert run(["curve", "--nope"], capsys)[0] == 1


def write_config(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# small sweep\nimage = synthetic:shapes:24\npeak = 2\nmethod = p4ip\n"
                   "method = anscombe\ndenoiser = gauss\nseed = 1\nseed = 2\nseed = 3\niters = 4\n")
    return cfg


def test_experiment(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code, out, _ = run(["--output-dir", tmp_path / "res", "experiment", cfg], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "res" / "results.csv").open()))
    assert len(rows) == 6 + 2
    assert sum(r["image"] == "Average" for r in rows) == 2
    assert all(r["status"].startswith("ok") for r in rows)
    assert (tmp_path / "res" / "experiment.log").exists()


def test_experiment_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("image = synthetic:disk\npeak = 1\nmethod = magic\nseed = 1\n")
    assert run(["experiment", cfg], capsys)[0] == 2
