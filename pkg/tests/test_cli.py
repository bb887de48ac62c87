import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

import oracles
from volfield.cli import EXIT_DOMAIN, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_USAGE, build_parser, main
from volfield.fields import dump_field, meridian
from volfield.minimizer import GridField


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, _ = run(capsys, *argv, "--format", "json")
    assert code == EXIT_OK
    return json.loads(out)


def test_volume_examples(capsys):
    doc = run_json(capsys, "volume", "--family", "meridian", "-k", "0")
    assert doc["value"] == pytest.approx(2 * math.pi**2, rel=1e-11)
    doc = run_json(capsys, "volume", "--family", "meridian", "-k", "1")
    assert doc["value"] == pytest.approx(8 * math.pi, rel=1e-11)
    assert doc["bounds"]["closed_form"] == pytest.approx(8 * math.pi, rel=1e-11)
    doc = run_json(capsys, "volume", "--family", "meridian", "-k", "2")
    assert doc["value"] == pytest.approx(oracles.meridian_volume_elliptic(2), rel=1e-10)


def test_volume_twelve_digits(capsys):
    _, out, _ = run(capsys, "volume", "-k", "1", "--format", "json")
    assert '"value": 25.1327412287,' in out


def test_volume_table_nine_digits(capsys):
    _, out, _ = run(capsys, "volume", "-k", "0", "--format", "table")
    assert "19.7392088 " in out.splitlines()[1] + " "


def test_volume_region_and_radius(capsys):
    doc = run_json(capsys, "volume", "--family", "latitude", "--region", "0.5,1.5,0.5,3", "--radius", "2")
    assert doc["radius"] == 2.0 and doc["region"]["kind"] == "rectangle"
    doc = run_json(capsys, "volume", "--family", "latitude", "--omega")
    assert doc["value"] == pytest.approx(oracles.omega_latitude_quad(), abs=1e-6)


def test_residual_examples(capsys):
    doc = run_json(capsys, "residuals", "--family", "meridian", "-k", "3")
    assert doc["sup_el"] < 1e-6
    doc = run_json(capsys, "residuals", "--family", "latitude")
    assert doc["sup_el"] > 1e-3
    doc = run_json(capsys, "residuals", "--family", "meridian", "-k", "0")
    assert doc["sup_cr"] > 0.1


def test_residual_csv_grid(capsys):
    code, out, _ = run(capsys, "residuals", "-k", "1", "--grid", "6x5", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0 and rows[0][:2] == ["theta", "phi"] and len(rows) == 31


def test_index_examples(capsys):
    code, out, _ = run(capsys, "index", "--family", "meridian", "-k", "1")
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.split() == ["k", "index_N", "index_S", "sum"]
    assert row.split() == ["1", "0", "2", "2"]
    doc = run_json(capsys, "index", "-k", "3", "--convention", "geometric")
    assert (doc["index_N"], doc["index_S"]) == (4, -2)


def test_compare_region_omega(capsys):
    doc = run_json(capsys, "compare-region", "--omega")
    assert doc["verdict"] is True and doc["margin"] > 0 and doc["pointwise_ok"] is True


def test_compare_region_rectangle(capsys):
    doc = run_json(capsys, "compare-region", "--region", "0.7853981634,1.5707963268,0,3.1415926536", "-k", "2")
    assert doc["holds"] is True and doc["lower"] < doc["volume"] < doc["upper"]


def test_minimize_family(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    saved = tmp_path / "best.json"
    doc = run_json(capsys, "minimize", "-k", "1", "--seed", "2", "--trace", str(trace), "--save-field", str(saved))
    assert doc["volume"] == pytest.approx(8 * math.pi, rel=1e-4)
    assert trace.read_text().startswith("iteration,objective\n")
    assert json.loads(saved.read_text())["k"] == 1
    assert "wall_clock" not in doc["trace"]


def test_minimize_budget_exit_code(capsys):
    code, _, err = run(capsys, "minimize", "-k", "1", "--max-iter", "20", "--format", "json")
    assert code == EXIT_NONCONVERGENCE
    assert "did not converge" in err


def test_field_sample_example(capsys):
    code, out, _ = run(capsys, "field-sample", "--family", "meridian", "-k", "1", "--grid", "24x48")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["theta", "phi", "a", "b"]
    data = np.array(rows[1:], dtype=float)
    assert data.shape == (1152, 4)
    assert np.max(np.abs(data[:, 2] ** 2 + data[:, 3] ** 2 - 1.0)) <= 1e-12 + 1e-11


def test_field_sample_unit_norm_in_full_precision():
    from volfield.cli import sample_rows

    rows = sample_rows(meridian(1), 24, 48)
    ab = np.array([(r["a"], r["b"]) for r in rows])
    assert len(rows) == 1152
    assert np.max(np.abs((ab**2).sum(axis=1) - 1.0)) < 1e-12


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--k-range", "0:3", "--indices")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [int(r["k"]) for r in rows] == [0, 1, 2, 3]
    assert float(rows[1]["volume"]) == pytest.approx(8 * math.pi, rel=1e-10)
    assert (int(rows[3]["index_N"]), int(rows[3]["index_S"])) == (-2, 4)


def test_sweep_independent_of_threads(capsys, monkeypatch):
    monkeypatch.setenv("VOLFIELD_THREADS", "1")
    _, single, _ = run(capsys, "sweep", "--k-range", "0:5")
    monkeypatch.setenv("VOLFIELD_THREADS", "4")
    _, multi, _ = run(capsys, "sweep", "--k-range", "0:5")
    assert single == multi


@pytest.mark.parametrize("argv", [
    ("volume", "-k", "2", "--format", "json"),
    ("index", "-k", "4"),
    ("compare-region", "--omega", "--format", "csv"),
    ("minimize", "-k", "0", "--seed", "5"),
    ("field-sample", "--family", "latitude", "--grid", "4x6"),
])
def test_byte_identical(capsys, argv):
    _, first, _ = run(capsys, *argv)
    _, second, _ = run(capsys, *argv)
    assert first == second and first


def test_out_flag(capsys, tmp_path):
    path = tmp_path / "v.json"
    code, out, _ = run(capsys, "volume", "-k", "0", "--out", str(path))
    assert code == 0 and out == ""
    assert json.loads(path.read_text())["value"] == pytest.approx(2 * math.pi**2)


def test_spec_file(capsys, tmp_path):
    path = tmp_path / "f.json"
    dump_field(meridian(2, 0.5), path)
    doc = run_json(capsys, "volume", "--spec", str(path))
    assert doc["value"] == pytest.approx(oracles.meridian_volume_elliptic(2), rel=1e-10)


def test_grid_file_family(capsys, tmp_path):
    path = tmp_path / "g.vfgrid"
    GridField.from_field(meridian(1), 48, 48, 1).save(path)
    doc = run_json(capsys, "index", "--family", "grid", "--grid-file", str(path))
    assert (doc["index_N"], doc["index_S"]) == (0, 2)


def test_spec_conflicts_with_inline_flags(capsys, tmp_path):
    path = tmp_path / "f.json"
    dump_field(meridian(1), path)
    with pytest.raises(SystemExit) as info:
        main(["volume", "--spec", str(path), "-k", "2"])
    assert info.value.code == EXIT_USAGE


def test_domain_errors_exit_2(capsys):
    assert run(capsys, "index", "--family", "latitude")[0] == EXIT_DOMAIN
    assert run(capsys, "volume", "--family", "ttype", "--T", "1,1")[0] == EXIT_DOMAIN
    assert run(capsys, "residuals", "--family", "meridian", "--radius", "-1")[0] == EXIT_DOMAIN


@pytest.mark.parametrize("argv", [
    ("frobnicate",),
    ("volume", "--no-such-flag"),
    ("volume", "--region", "1,2,3"),
    ("volume", "--grid", "banana"),
    (),
])
def test_usage_errors_exit_64(argv):
    with pytest.raises(SystemExit) as info:
        main(list(argv))
    assert info.value.code == EXIT_USAGE


def test_help_lists_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.choices and "volume" in a.choices)
    expected = {"volume", "residuals", "index", "compare-region", "minimize", "field-sample", "sweep"}
    assert set(sub.choices) == expected
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)
    shared = sub.choices["volume"].format_help()
    for flag in ("--family", "-k", "--phi0", "--fourier", "--region", "--omega", "--radius", "--format", "--out"):
        assert flag in shared


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "volfield.cli", "volume", "-k", "0", "--format", "csv"],
                         capture_output=True, text=True, check=True)
    assert "19.7392088022" in res.stdout
    res = subprocess.run([sys.executable, "-m", "volfield.cli", "--bogus"], capture_output=True, text=True)
    assert res.returncode == 64
