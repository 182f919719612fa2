import csv
import json
import math
import subprocess
import sys

import jsonschema
import pytest

from levelmeasure import __version__
from levelmeasure.cli import CIRCLESET_SCHEMA, ESTIMATE_SCHEMA, MANIFEST_SCHEMA, main
from levelmeasure.geometry import circle_curve, polygon_curve, read_curve_csv, write_curve_csv

FAST = ["--base-cells", "32", "--max-depth", "8", "--threads", "2"]


@pytest.fixture
def square_csv(tmp_path):
    p = tmp_path / "sq.csv"
    write_curve_csv(polygon_curve([(0, 0), (1, 0), (1, 1), (0, 1)]), p)
    return p


@pytest.fixture
def circle_csv(tmp_path):
    p = tmp_path / "circle.csv"
    write_curve_csv(circle_curve(4096), p)
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = run(["--version"], capsys)
    assert code == 0 and __version__ in out


def test_estimate_paraboloid(tmp_path, capsys):
    out_path = tmp_path / "est.json"
    code, out, _ = run(["estimate", "--field", "x^2+y^2-1", "--dim", "2", "--R", "1", "--out", out_path, *FAST], capsys)
    assert code == 0
    data = json.loads(out_path.read_text())
    jsonschema.validate(data, ESTIMATE_SCHEMA)
    assert data["h_measure"] == pytest.approx(2 * math.pi, rel=1e-3)
    assert "h_measure=6.28" in out
    manifest = json.loads((tmp_path / "est.json.manifest.json").read_text())
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    assert manifest["outputs"] == [str(out_path)] and manifest["tool_version"] == __version__


def test_estimate_csv_rows(tmp_path, capsys):
    out_path = tmp_path / "est.csv"
    code, _, _ = run(
        ["estimate", "--field", "x^2+y^2-1", "--R", "1", "--k-schedule", "8,64,512", "--out", out_path, *FAST], capsys
    )
    assert code == 0
    rows = list(csv.DictReader(out_path.open()))
    assert [int(r["k"]) for r in rows] == [8, 64, 512]
    # 17 significant digits round-trip the doubles
    assert all(len(r["F"].replace(".", "").lstrip("0")) >= 15 for r in rows)


def test_estimate_curve(circle_csv, capsys):
    code, out, _ = run(["estimate", "--curve", circle_csv, "--R", "1", *FAST], capsys)
    assert code == 0
    h = float(out.split("h_measure=")[1].split()[0])
    assert h == pytest.approx(2 * math.pi, rel=2e-3)


def test_estimate_empty_zero_set(capsys):
    code, out, err = run(["estimate", "--field", "x^2+y^2+1", "--R", "1", *FAST], capsys)
    assert code == 2
    assert "empty zero set" in err
    assert float(out.split("h_measure=")[1].split()[0]) <= 0.01


def test_estimate_3d(capsys):
    code, out, _ = run(["estimate", "--field", "x^2+y^2+z^2-1", "--dim", "3", "--R", "1", "--max-depth", "3"], capsys)
    assert code == 0
    assert float(out.split("h_measure=")[1].split()[0]) == pytest.approx(4 * math.pi, rel=0.01)


@pytest.mark.parametrize(
    "argv",
    [
        ["estimate", "--field", "x^2+", "--R", "1"],
        ["estimate", "--field", "x^2+y^2-1"],
        ["estimate", "--curve", "/nonexistent.csv", "--R", "1"],
        ["estimate", "--field", "x", "--R", "-1"],
        ["estimate", "--field", "x", "--R", "1", "--k-schedule", "8,4"],
        ["estimate", "--field", "w", "--dim", "4", "--R", "1"],
        ["pathology", "--n", "0"],
        ["pathology"],
        ["oracle", "tube", "--curve", "/nonexistent.csv", "--eps", "0.1"],
        ["oracle", "arclen", "--f", "sin(x)"],
        ["nosuchcommand"],
    ],
)
def test_errors_exit_1(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1 and err


def test_oracle_modes(square_csv, circle_csv, capsys):
    code, out, _ = run(["oracle", "arclen", "--f", "sin(x)", "--a", "0", "--b", "6.2831853"], capsys)
    assert code == 0 and float(out) == pytest.approx(7.6404, abs=1e-3)
    code, out, _ = run(["oracle", "length", "--curve", square_csv], capsys)
    assert float(out) == 4.0
    code, out, _ = run(["oracle", "tube", "--curve", circle_csv, "--eps", "0.01"], capsys)
    assert float(out) == pytest.approx(0.1257, rel=0.01)
    code, out, _ = run(["oracle", "reach", "--curve", circle_csv], capsys)
    assert 0.95 <= float(out) <= 1.01


def test_pathology_schedule(tmp_path, capsys):
    out_path = tmp_path / "cs.json"
    code, out, _ = run(["pathology", "--n", "3", "--emit-schedule", "--out", out_path], capsys)
    assert code == 0
    assert "r=0.5 " in out and "r=0.125 " in out and "r=0.015625 " in out
    data = json.loads(out_path.read_text())
    jsonschema.validate(data, CIRCLESET_SCHEMA)
    assert [row["r"] for row in data["schedule"][:3]] == [0.5, 0.125, 0.015625]


def test_pathology_coverage_closed_form(tmp_path, capsys):
    out_path = tmp_path / "cov.json"
    code, _, _ = run(["pathology", "--n", "1", "--coverage", "0.5", "--out", out_path], capsys)
    assert code == 0
    cov = json.loads(out_path.read_text())["coverage"]
    assert cov["fractions"][-1] == pytest.approx(cov["closed_form"], rel=0.02)


def test_circleset_feeds_estimate(tmp_path, capsys):
    cs_path = tmp_path / "cs.json"
    run(["pathology", "--n", "3", "--out", cs_path], capsys)
    total = json.loads(cs_path.read_text())["total_length"]
    code, out, _ = run(["estimate", "--circles", cs_path, "--R", "1.5", *FAST], capsys)
    h = float(out.split("h_measure=")[1].split()[0])
    assert h == pytest.approx(total, rel=0.05)


def test_rootdetect(capsys):
    code, out, _ = run(["rootdetect", "--f", "x*(x-1)", "--a", "-0.5", "--b", "1.5", "--threshold", "100"], capsys)
    assert code == 0 and out.count("sign_change") == 2
    code, out, _ = run(["rootdetect", "--f", "exp(x)", "--a", "0", "--b", "1", "--threshold", "2", "--lambda", "1"], capsys)
    assert "no intervals" in out and "lambda bound holds" in out and "fence" in out


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# reproduction\nf = x*(x-1)\na = -0.5\nb = 1.5\nthreshold = 100\n")
    code, out, _ = run(["rootdetect", "--config", cfg], capsys)
    assert code == 0 and out.count("sign_change") == 2
    code, out, _ = run(["rootdetect", "--config", cfg, "--b", "0.5"], capsys)
    assert out.count("sign_change") == 1
    cfg.write_text("bogus = 1\n")
    code, _, err = run(["rootdetect", "--config", cfg], capsys)
    assert code == 1 and "bogus" in err


def test_manifest_reproduces(tmp_path, capsys):
    first = tmp_path / "a.json"
    run(["estimate", "--field", "x^2+2*y^2-1", "--R", "1", "--jitter-seed", "5", "--out", first, *FAST], capsys)
    params = json.loads((tmp_path / "a.json.manifest.json").read_text())["parameters"]
    argv = ["estimate"]
    for k, v in params.items():
        if k in {"command", "config"} or v is None:
            continue
        flag = "--" + k.replace("_", "-")
        argv += [flag, ",".join(map(str, v)) if isinstance(v, list) else v]
    second = tmp_path / "b.json"
    run([*argv, "--out", second], capsys)
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    assert a["per_k"] == b["per_k"] and a["limit"] == b["limit"]


def test_csv_written_by_cli_round_trips(tmp_path, circle_csv):
    c = read_curve_csv(circle_csv)
    assert c.closed and len(c.points) == 4096
    assert list(circle_curve(4096).points[17]) == list(c.points[17])


def test_console_script(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "levelmeasure.cli", "oracle", "arclen", "--f", "x", "--a", "0", "--b", "1"],
        capture_output=True,
        text=True,
    )
    # console output carries 6 significant digits
    assert res.returncode == 0 and float(res.stdout) == pytest.approx(math.sqrt(2), rel=1e-5)
