import csv
import json

import pytest

from qlorentz.cli import main


def _write(tmp_path, text, name="c.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_invalid_config_exits_without_writing(tmp_path):
    out = tmp_path / "out"
    cfg = _write(tmp_path, "[run]\ndim = 5\n")
    assert main(["lbe-run", "--config", cfg, "--out", str(out)]) == 1
    assert not out.exists()


def test_validate_reports_passing_checks(tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "--out", str(out)]) == 0
    rows = _rows(out / "validate.csv")
    assert len(rows) >= 10
    assert all(r["passed"] == "pass" for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["diagnostics"]["checks"] == len(rows)


def test_module_error_writes_a_failed_manifest(tmp_path):
    out = tmp_path / "f"
    # a 4-node circle cannot resolve W_hat on the shell
    cfg = _write(tmp_path, "[run]\ndim = 2\n[scattering]\nn_azimuth = 4\n")
    assert main(["tmatrix", "--config", cfg, "--out", str(out)]) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["partial"] is True
    assert manifest["module"] == "tmatrix"
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]


def test_zero_coupling_slab_run_matches_closed_form(tmp_path):
    out = tmp_path / "slab"
    cfg = _write(tmp_path, """
[run]
dim = 1
[coupling]
kind = zero
[a]
y0 = 0.3
[b]
sx = 1.5
x0 = 0.5
[transport]
geometry = slab
kernel = none
n_x = 256
period = 32
dt = 0.02
n_speeds = 12
""")
    assert main(["lbe-run", "--config", cfg, "--out", str(out)]) == 0
    for row in _rows(out / "lbe.csv"):
        free = float(row["free_pairing"])
        assert abs(float(row["pairing"]) - free) <= 1e-6 * abs(free)


@pytest.mark.parametrize("command,text", [
    ("lbe-run", "[transport]\nsolver = mc\nn_particles = 3000\nt_final = 1\nn_times = 3\n[coupling]\nlam_max = 0.3\n"),
    ("scatterers", "[run]\ndim = 2\n[scatterers]\nkind = matern\nwindow_radius = 12\n"),
    ("tmatrix", "[run]\ndim = 2\n[scattering]\nn_azimuth = 32\n"),
])
def test_reruns_are_byte_identical(tmp_path, command, text):
    cfg = _write(tmp_path, text)
    outs = [tmp_path / "one", tmp_path / "two"]
    for out in outs:
        assert main([command, "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        if name != "manifest.json":
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # manifests differ only in the echoed output directory
    manifests = [json.loads((out / "manifest.json").read_text()) for out in outs]
    for m in manifests:
        m["config"]["run"].pop("out")
    assert manifests[0] == manifests[1]
