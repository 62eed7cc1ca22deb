import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from radiomap_inpaint.cli import main
from radiomap_inpaint.io import read_grid, read_mask


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    d = tmp_path_factory.mktemp("world")
    assert main(["scenario", str(d / "spec.json"), "--seed", "3", "--rows", "40", "--cols", "40",
                 "--n-tx", "2"]) == 0
    assert main(["generate", str(d / "spec.json"), str(d), "--rect", "12", "14", "8", "8"]) == 0
    return d


def test_generate_outputs(world):
    truth = read_grid(world / "truth.rmg")
    mask = read_mask(world / "mask.rmg")
    assert truth.shape == (40, 40) and mask.missing_count() == 64
    assert not read_grid(world / "observed.rmg").mask().observed[12:20, 14:22].any()


def test_unknown_flag_exits_nonzero_with_usage(capsys):
    with pytest.raises(SystemExit) as e:
        main(["inpaint", "--bogus"])
    assert e.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_runtime_error_goes_to_stderr(tmp_path, capsys):
    (tmp_path / "bad.rmg").write_text("nonsense\n")
    assert main(["render", str(tmp_path / "bad.rmg"), str(tmp_path / "x.pgm")]) == 1
    assert "error" in capsys.readouterr().err


def test_eval_truth_against_itself(world, capsys):
    assert main(["eval", str(world / "truth.rmg"), str(world / "truth.rmg"), str(world / "mask.rmg")]) == 0
    out = capsys.readouterr().out
    assert "mse=0.0" in out


@pytest.mark.parametrize("method", ["epc", "tpi", "idw", "mbi"])
def test_inpaint_deterministic(world, tmp_path, method):
    outs = []
    for k in range(2):
        p = tmp_path / f"{method}{k}.rmg"
        assert main(["inpaint", str(world / "observed.rmg"), str(world / "mask.rmg"), str(world / "spec.json"),
                     str(p), "--method", method, "--patch-size", "7"]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]
    est = read_grid(tmp_path / f"{method}0.rmg")
    assert est.complete


def test_config_precedence(world, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"patch_size": 9, "beta": 3.0}))
    args = ["inpaint", str(world / "observed.rmg"), str(world / "mask.rmg"), str(world / "spec.json"),
            str(tmp_path / "o.rmg"), "--config", str(cfg)]
    assert main(args + ["--patch-size", "5"]) == 0
    out = capsys.readouterr().out
    assert " n=5 " in out and "beta=3.0" in out
    assert main(args) == 0
    out = capsys.readouterr().out
    assert " n=9 " in out and "beta=3.0" in out
    assert main(args[:-2]) == 0
    assert " n=15 " in capsys.readouterr().out


def test_bench_rows_and_determinism(tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps({"seeds": [1, 2], "sizes": [8, 12], "methods": ["idw", "mean", "epc"],
                                 "rows": 40, "cols": 40, "n_tx": 2, "params": {"epc": {"patch_size": 5}}}))
    blobs = []
    for k in range(2):
        out = tmp_path / f"b{k}.csv"
        assert main(["bench", str(suite), str(out), "--no-timing"]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]
    rows = list(csv.DictReader(open(tmp_path / "b0.csv")))
    assert len(rows) == 2 * 2 * 3
    assert set(rows[0]) == {"method", "seed", "size", "mse", "ne", "seconds"}
    assert all(r["seconds"] == "0.000" for r in rows)
    assert all(float(r["mse"]) >= 0 for r in rows)


def test_depthmap_superpixels_render(world, tmp_path):
    assert main(["depthmap", str(world / "spec.json"), str(tmp_path / "w.rmg")]) == 0
    w = read_grid(tmp_path / "w.rmg").data
    assert w.min() == 0.0 and w.max() == 1.0
    assert main(["superpixels", str(world / "spec.json"), str(tmp_path / "l.rmg"), "--superpixels", "6"]) == 0
    assert set(np.unique(read_grid(tmp_path / "l.rmg").data)) == set(range(6))
    assert main(["render", str(world / "truth.rmg"), str(tmp_path / "t.pgm")]) == 0
    assert (tmp_path / "t.pgm").read_bytes().startswith(b"P5\n40 40\n255\n")


def test_entry_point_module():
    r = subprocess.run([sys.executable, "-m", "radiomap_inpaint.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "inpaint" in r.stdout
