import json
import subprocess
import sys
from fractions import Fraction as F

import pytest

from artifact import models
from artifact.cli import main
from artifact.complex import WeightedComplex, Generator, complex_to_dict
from artifact.models import CapacityReport, spec_to_dict
from artifact.reduction import Barcode


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(path)


def run(capsys, *argv):
    status = main(list(argv))
    cap = capsys.readouterr()
    return status, cap.out, cap.err


@pytest.fixture
def disk_file(tmp_path):
    def make(delta, truncation=16):
        return write(tmp_path, f"disk{delta.replace('/', '_')}.json", spec_to_dict(models.disk(F(delta), truncation)))

    return make


def test_homology_large_disk(capsys, disk_file):
    status, out, _ = run(capsys, "homology", "--model", disk_file("3/5"), "--coeff", "lambda", "--precision", "1")
    assert status == 0
    data = json.loads(out)
    assert data["total_infinite"] == 2
    assert Barcode.from_dict(data).total_infinite() == 2


def test_capacity_small_disk_has_witness(capsys, disk_file):
    status, out, _ = run(capsys, "capacity", "--model", disk_file("3/10"), "--kind", "csh", "--precision", "1")
    assert status == 0
    data = json.loads(out)
    assert data["value"] == "3/10"
    assert data["witness"]["level"]
    rep = CapacityReport.from_dict(data)
    assert rep.value == F(3, 10)
    assert rep.to_dict() == data


def test_capacity_equivariant(capsys, disk_file):
    status, out, _ = run(capsys, "capacity", "--model", disk_file("1/5"), "--kind", "cgh", "--k", "2")
    assert status == 0
    data = json.loads(out)
    assert data["kind"] == "cgh" and data["k"] == 2 and data["value"] == "1/5"


def test_verify_reports_bad_differential(capsys, tmp_path):
    gens = [Generator("a", 0, 0), Generator("b", 1, 1), Generator("c", 2, 2)]
    good = complex_to_dict(WeightedComplex(gens, {}))
    good["differential"] = {"a": {"b": "1"}, "b": {"c": "1"}}
    status, out, _ = run(capsys, "verify", "--complex", write(tmp_path, "bad.json", good))
    assert status == 1
    data = json.loads(out)
    assert not data["valid"]
    assert data["violations"]


def test_verify_accepts_model(capsys, disk_file):
    status, out, _ = run(capsys, "verify", "--model", disk_file("2/5"))
    assert status == 0
    assert json.loads(out) == {"valid": True, "violations": []}


def test_malformed_json_location(capsys, tmp_path):
    path = write(tmp_path, "broken.json", '{\n  "variant": "disk_in_sphere",\n  "delta": \n}')
    status, out, err = run(capsys, "homology", "--model", path)
    assert status == 1
    assert out == ""
    assert "line 4 column 1" in err


def test_missing_input_flag(capsys):
    status, _, err = run(capsys, "capacity")
    assert status == 1
    assert "--model" in err


def test_bad_precision(capsys, disk_file):
    status, _, err = run(capsys, "homology", "--model", disk_file("1/5"), "--precision", "0")
    assert status == 1
    assert "precision" in err


def test_no_stabilization_exit_code(capsys, monkeypatch, disk_file):
    monkeypatch.setenv("NOVIKOV_SLICE_BUDGET", "3")
    status, out, _ = run(capsys, "homology", "--model", disk_file("9/20", 48))
    assert status == 2
    data = json.loads(out)
    assert data["diagnostics"]["budget"] == 3


def test_gysin_exact(capsys, disk_file):
    status, out, _ = run(capsys, "gysin", "--model", disk_file("3/5", 6), "--u-trunc", "2", "--coeff", "ring", "--levels=-1/2,-2")
    assert status == 0
    data = json.loads(out)
    assert data["exact"]
    assert sorted(data["levels"]) == ["-1/2", "-2", "-inf"]


def test_spectral_and_telescope(capsys, disk_file):
    status, out, _ = run(capsys, "spectral", "--model", disk_file("3/5"), "--u-trunc", "1")
    assert status == 0
    pages = json.loads(out)["pages"]
    assert sum(e["rank"] for e in pages["inf"]) == 4
    status, out, _ = run(capsys, "telescope", "--model", disk_file("3/5"), "--orbits", "3")
    assert status == 0
    assert json.loads(out)["slices"] == 3


def test_output_is_deterministic(capsys, disk_file):
    path = disk_file("2/5")
    first = run(capsys, "capacity", "--model", path, "--verbose")[1]
    second = run(capsys, "capacity", "--model", path, "--verbose")[1]
    assert first == second


def delta_grid(tmp_path, deltas):
    grid = {
        "model": {"variant": "disk_in_sphere", "delta": "1/2", "orbit_truncation": 16},
        "parameters": {"delta": deltas},
        "compute": ["infinite"],
    }
    return write(tmp_path, "grid.json", grid)


def test_sweep_rank_jump(capsys, tmp_path):
    deltas = [f"{i}/10" for i in range(1, 10)]
    status, out, _ = run(capsys, "sweep", "--grid", delta_grid(tmp_path, deltas))
    assert status == 0
    rows = json.loads(out)["rows"]
    assert [r[1] for r in rows] == ["0"] * 4 + ["2"] * 5


def test_sweep_parallel_identical(capsys, tmp_path):
    path = delta_grid(tmp_path, ["1/5", "3/10", "1/2", "7/10"])
    serial = run(capsys, "sweep", "--grid", path, "--format", "table")[1]
    parallel = run(capsys, "sweep", "--grid", path, "--format", "table", "--jobs", "3")[1]
    assert serial == parallel


def test_sweep_empty_grid_is_header_only(capsys, tmp_path):
    grid = {"model": {"variant": "disk_in_sphere", "delta": "1/2"}, "parameters": {}, "columns": ["delta", "infinite"], "compute": ["infinite"]}
    status, out, _ = run(capsys, "sweep", "--grid", write(tmp_path, "empty.json", grid), "--format", "table")
    assert status == 0
    assert out.strip().splitlines() == ["delta  infinite"]


def test_sweep_scaled_family_is_linear(capsys, tmp_path):
    grid = {
        "model": {"variant": "disk_in_sphere", "delta": "3/10", "orbit_truncation": 16},
        "parameters": {"factor": ["1/2", "1", "2", "3"]},
        "compute": ["csh", "cgh"],
    }
    status, out, _ = run(capsys, "sweep", "--grid", write(tmp_path, "scaled.json", grid))
    assert status == 0
    rows = json.loads(out)["rows"]
    for factor, c_sh, c_gh in rows:
        assert F(c_sh) == F(factor) * F(3, 10)
        assert F(c_gh) == F(c_sh)


def test_sweep_rejects_unknown_parameter(capsys, tmp_path):
    grid = {"model": {"variant": "disk_in_sphere", "delta": "1/2"}, "parameters": {"colour": [1]}}
    status, _, err = run(capsys, "sweep", "--grid", write(tmp_path, "g.json", grid))
    assert status == 1
    assert "colour" in err


def test_module_entry_point(disk_file):
    proc = subprocess.run(
        [sys.executable, "-m", "artifact", "homology", "--model", disk_file("1/10"), "--format", "table"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0].split() == ["degree", "infinite", "finite"]


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as err:
        main(["nonsense"])
    assert err.value.code == 1
