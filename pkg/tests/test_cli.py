import json
import subprocess
import sys

import pytest

from relsparse.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "sim.yaml"
    path.write_text("n: 150\nT: 3\nK: 2\nseed: 0\n")
    return path


@pytest.fixture(scope="module")
def swept(tmp_path_factory, sim_cfg):
    root = tmp_path_factory.mktemp("run")
    assert run("simulate", "--config", sim_cfg, "--out", root / "d.csv") == 0
    out = root / "diagram"
    assert run("sweep", "--data", root / "d.csv", "--out", out, "--n-lambda", 5,
               "--baseline-variance", "--threads", 1) == 0
    return root, out


def test_simulate_deterministic_and_shape(tmp_path, sim_cfg):
    for name in ("a.csv", "b.csv"):
        assert run("simulate", "--config", sim_cfg, "--seed", 7, "--out", tmp_path / name) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    assert len(a.decode().splitlines()) == 150 * 4 + 1


def test_simulate_default_size(tmp_path):
    assert run("simulate", "--out", tmp_path / "d.csv") == 0
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 1000 * 4 + 1


def test_missing_out_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("simulate")
    assert exc.value.code == 2
    proc = subprocess.run([sys.executable, "-m", "relsparse.cli", "sweep", "--data", "x.csv"], capture_output=True)
    assert proc.returncode == 2


def test_sweep_outputs(swept):
    _, out = swept
    lines = (out / "diagram.csv").read_text().splitlines()
    assert len(lines) - 1 == 3 * 6 * 3
    assert lines[0].endswith(",se_baseline")
    for g in ("0.1", "1", "10"):
        assert (out / f"diagram_gamma_{g}.svg").stat().st_size > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n_lambda"] == 5
    assert manifest["metadata"]["n"] == 150


def test_manifest_reruns_identically(swept, tmp_path):
    root, out = swept
    assert run("sweep", "--config", out / "manifest.json", "--out", tmp_path / "again") == 0
    assert (tmp_path / "again" / "diagram.csv").read_bytes() == (out / "diagram.csv").read_bytes()


def test_corrupt_dataset_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("traj_id,t,s_1,s_2,action,reward\n0,0,1,2,7,0\n")
    assert run("sweep", "--data", bad, "--out", tmp_path / "o") == 1
    assert "row 1" in capsys.readouterr().err


def test_missing_dataset_exit_1(tmp_path):
    assert run("sweep", "--data", tmp_path / "nope.csv", "--out", tmp_path / "o") == 1


def test_weight_cap_rejected(swept, tmp_path):
    root, _ = swept
    with pytest.raises(SystemExit) as exc:
        run("sweep", "--data", root / "d.csv", "--out", tmp_path, "--weight-cap", 5)
    assert exc.value.code == 2


def test_replicate_merges_and_is_deterministic(swept, sim_cfg, tmp_path):
    root, out = swept
    import shutil

    copies = []
    for name in ("r1", "r2"):
        d = tmp_path / name
        shutil.copytree(out, d)
        assert run("replicate", "--sim-config", sim_cfg, "--diagram-dir", d, "--replicates", 2,
                   "--master-seed", 1, "--formats", "svg", "--threads", 1) == 0
        copies.append(d)
    for f in ("diagram.csv", "empirical.csv"):
        assert (copies[0] / f).read_bytes() == (copies[1] / f).read_bytes()
    rows = (copies[0] / "diagram.csv").read_text().splitlines()
    header = rows[0].split(",")
    idx = header.index("se_empirical")
    assert all(r.split(",")[idx] != "" for r in rows[1:])
    manifest = json.loads((copies[0] / "manifest.json").read_text())
    assert len(manifest["replicate"]["replicate_seeds"]) == 2


def test_replicate_needs_two(swept, sim_cfg, capsys):
    _, out = swept
    assert run("replicate", "--sim-config", sim_cfg, "--diagram-dir", out, "--replicates", 1) == 1
    assert "at least 2" in capsys.readouterr().err


def test_replicate_without_diagram(tmp_path, sim_cfg):
    assert run("replicate", "--sim-config", sim_cfg, "--diagram-dir", tmp_path, "--replicates", 2) == 1


def test_check_passes(capsys):
    import time

    start = time.perf_counter()
    assert run("check") == 0
    assert time.perf_counter() - start < 60
    out = capsys.readouterr().out
    assert "FAIL" not in out and "6/6 checks passed" in out


def test_check_detects_perturbed_gradient(capsys):
    assert run("check", "--perturb-gradient", 1e-3) == 1
    assert "FAIL" in capsys.readouterr().out
