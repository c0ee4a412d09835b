import csv
import json

import pytest

from raylength.cli import SEQUENCE_COLUMNS, SPECTRUM_COLUMNS, RunConfig, main, run
from raylength.sceneio import emit_scene, reference_scene


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_spectrum_single_sphere(tmp_path):
    assert main(["spectrum", "--scene", "unit_sphere", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert tuple(rows[0]) == SPECTRUM_COLUMNS
    assert len(rows) == 2
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "spectrum" and manifest["seed"] == 0 and "version" in manifest


def test_scene_file_argument(tmp_path):
    path = tmp_path / "scene.toml"
    path.write_text(emit_scene(reference_scene("two_spheres")))
    out = tmp_path / "out"
    assert main(["spectrum", "--scene", str(path), "--omega", "0,1,0", "--theta", "0,-0.6,0.8",
                 "--m-max", "3", "--out", str(out)]) == 0
    assert len(read_csv(out / "spectrum.csv")) > 2


def test_validate_sphere_report(tmp_path):
    assert main(["validate-sphere", "--scene", "unit_sphere", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "validate_sphere.csv")
    assert "peak_time_error" in rows[0]
    col = rows[0].index("peak_time_error")
    assert float(rows[1][col]) < float(rows[1][rows[0].index("resolution")])
    assert (tmp_path / "kernel.csv").exists() and (tmp_path / "amplitude.csv").exists()


def test_unknown_command_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus", "--out", str(tmp_path)])
    assert info.value.code == 2
    assert run("bogus", RunConfig(out=str(tmp_path))) == 2


def test_failures_write_error_report(tmp_path):
    code = main(["spectrum", "--scene", "unit_sphere", "--omega", "0,0,1", "--theta", "0,0,1",
                 "--out", str(tmp_path)])
    assert code == 1
    err = json.loads((tmp_path / "error.json").read_text())
    assert err["error"] == "ValidationError"
    assert main(["spectrum", "--scene", str(tmp_path / "missing.toml"), "--out", str(tmp_path)]) == 1


def test_cross_check_and_weakndg_deterministic(tmp_path):
    for cmd, extra in (("cross-check", ["--n-rays", "12", "--m-max", "3"]),
                       ("weakndg", ["--samples", "300"])):
        bodies = []
        for k in range(2):
            out = tmp_path / f"{cmd}{k}"
            assert main([cmd, "--scene", "two_spheres", "--seed", "7", "--out", str(out)] + extra) == 0
            csv_name = "cross_check.csv" if cmd == "cross-check" else "weakndg.csv"
            bodies.append((out / csv_name).read_bytes())
        assert bodies[0] == bodies[1]


def test_trapscan_tables(tmp_path):
    assert main(["trapscan", "--scene", "two_spheres", "--direction-density", "10",
                 "--budgets", "10,20,40", "--budget", "60", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sequence.csv")
    assert tuple(rows[0]) == SEQUENCE_COLUMNS and len(rows) == 4
    sojourns = [float(r[3]) for r in rows[1:]]
    assert sojourns == sorted(sojourns)
    field = read_csv(tmp_path / "escape_field.csv")
    assert len(field) == 1 + 100 + 1
    assert sum(r[-1] == "true" for r in field[1:]) == 1
