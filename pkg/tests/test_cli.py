from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from steercert.cli import main, parse_angle, parse_grid


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def csv_rows(text):
    return list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))


def strip_timestamp(text):
    return "\n".join(l for l in text.splitlines() if "generated_at" not in l)


@pytest.mark.parametrize(
    "text,expected",
    [("0.25pi", math.pi / 4), ("pi", math.pi), ("pi/4", math.pi / 4), ("-0.5pi", -math.pi / 2), ("0.3", 0.3)],
)
def test_parse_angle(text, expected):
    assert parse_angle(text) == pytest.approx(expected)


def test_parse_grid():
    g = parse_grid("0.05pi:0.45pi:9")
    assert len(g) == 9 and g[0] == pytest.approx(0.05 * math.pi) and g[-1] == pytest.approx(0.45 * math.pi)
    assert parse_grid("0.25pi") == [pytest.approx(math.pi / 4)]
    assert len(parse_grid("0.1pi,0.2pi")) == 2


def test_scan_theta_table_grid(capsys):
    code, out, _ = run_cli(capsys, "scan-theta", "--grid", "0.05pi:0.45pi:9", "--format", "csv")
    assert code == 0
    rows = csv_rows(out)
    assert len(rows) == 9
    assert all(abs(float(r["exact_s"]) - 4) < 1e-9 for r in rows)


def test_scan_theta_single(capsys):
    code, out, _ = run_cli(capsys, "scan-theta", "--grid", "0.25pi", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 1 and doc["rows"][0]["theta_over_pi"] == pytest.approx(0.25)


@pytest.mark.parametrize("grid", ["0.1pi:0.2pi", "abc", "0.1pi:0.2pi:x", "0.1pi:0.2pi:0"])
def test_scan_theta_malformed_grid(capsys, grid):
    code, _, err = run_cli(capsys, "scan-theta", "--grid", grid)
    assert code == 1 and "error" in err


def test_scan_theta_out_of_range_is_usage_error(capsys):
    code, _, _ = run_cli(capsys, "scan-theta", "--grid", "0.6pi")
    assert code == 1


def test_scan_theta_with_events(capsys):
    code, out, _ = run_cli(capsys, "scan-theta", "--grid", "0.3pi", "--events", "20000", "--seed", "1")
    assert code == 0
    assert float(csv_rows(out)[0]["s_hat"]) == 4.0


def test_bounds_default_values(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--samples", "320")
    assert code == 0
    doc = json.loads(out)
    assert doc["bounds"]["known_measurements"] == pytest.approx(2 + math.sqrt(2))
    assert doc["bounds"]["unknown_measurements"] == 3.0
    assert doc["saturating_model"]["s"] == pytest.approx(2 + math.sqrt(2))
    assert doc["falsification"]["samples"] == 320


def test_bounds_without_samples(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--samples", "0")
    assert code == 0
    assert "falsification" not in json.loads(out)


def test_bounds_non_mub_charlie(capsys):
    code, out, _ = run_cli(capsys, "bounds", "--samples", "0", "--charlie", "x,z")
    assert code == 0
    assert json.loads(out)["bounds"]["known_measurements"] == pytest.approx(2 + math.sqrt(2))
    code, out, _ = run_cli(capsys, "bounds", "--samples", "0", "--charlie", "x,x")
    assert json.loads(out)["bounds"]["known_measurements"] == pytest.approx(4.0)


def test_bounds_bad_charlie(capsys):
    assert run_cli(capsys, "bounds", "--charlie", "x")[0] == 1
    assert run_cli(capsys, "bounds", "--charlie", "x,w")[0] == 1


def test_falsify_alias(capsys):
    code, out, _ = run_cli(capsys, "falsify", "--samples", "160", "--format", "csv")
    assert code == 0
    quantities = {r["quantity"] for r in csv_rows(out)}
    assert "falsification_max_s" in quantities


def test_solve_angles_ghz(capsys):
    code, out, _ = run_cli(capsys, "solve-angles", "--theta", "0.25pi")
    assert code == 0
    doc = json.loads(out)
    assert doc["bob"]["B0"]["realized_bloch"] == pytest.approx([1, 0, 0], abs=1e-9)
    assert doc["bob"]["B1"]["realized_bloch"] == pytest.approx([0, 1, 0], abs=1e-9)
    assert doc["fixed"]["A0/C0"]["angles_deg"] == [22.5]
    assert doc["fixed"]["A1/C1"]["angles_deg"] == [0.0, 45.0, 90.0]


def test_solve_angles_round_trip(capsys):
    code, out, _ = run_cli(capsys, "solve-angles", "--theta", "0.2pi")
    assert code == 0
    doc = json.loads(out)
    assert doc["bob"]["B0"]["deviation"] < 1e-9 and doc["bob"]["B1"]["deviation"] < 1e-9


def test_solve_angles_out_of_range(capsys):
    code, _, err = run_cli(capsys, "solve-angles", "--theta", "0.6pi")
    assert code == 1 and "outside" in err
    assert run_cli(capsys, "solve-angles")[0] == 1


def test_verify_table_bundled(capsys):
    code, out, _ = run_cli(capsys, "verify-table", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["rows"]) == 9
    assert doc["summary"]["rows"] == 9
    for row in doc["rows"]:
        assert set(row["per_convention"]) >= {"fast-axis", "fast-axis-conjugate"}


def test_verify_table_corrupted_row(tmp_path, capsys):
    src = tmp_path / "t.csv"
    src.write_text("theta,b0_q1,b0_h,b0_q2,b1_q1,b1_h,b1_q2\n0.2pi,-5,??,-13,0,36,-90\n0.25pi,0,45,0,0,45,90\n")
    code, out, _ = run_cli(capsys, "verify-table", str(src), "--format", "json")
    assert code == 0
    bad, good = json.loads(out)["rows"]
    assert bad["status"] == "flag" and bad["b0_deviation"] == "inf"
    assert good["b1_deviation"] < 1e-9


def test_verify_table_tolerance(capsys):
    _, loose, _ = run_cli(capsys, "verify-table", "--format", "json", "--tolerance", "10")
    _, strict, _ = run_cli(capsys, "verify-table", "--format", "json", "--tolerance", "0.001")
    assert json.loads(loose)["summary"]["pass"] == 9
    assert json.loads(strict)["summary"]["pass"] <= json.loads(loose)["summary"]["pass"]


def test_verify_table_missing_file(capsys, tmp_path):
    assert run_cli(capsys, "verify-table", str(tmp_path / "none.csv"))[0] == 1


def test_simulate_noiseless(capsys):
    code, out, err = run_cli(capsys, "simulate", "--theta", "0.3pi", "--events", "100000", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    assert doc["estimate"]["s_hat"] == 4.0
    assert doc["meta"]["config"]["seed"] == 7
    assert "S = 4.000000" in err


def test_simulate_dark(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--theta", "0.25pi", "--dark", "0.05", "--events", "20000")
    assert code == 0
    est = json.loads(out)["estimate"]
    assert est["s_hat"] < 4 and est["s_stderr"] > 0


@pytest.mark.parametrize("args", [["--events", "0"], ["--dark", "1.5"], ["--efficiency", "0"], ["--theta", "x"]])
def test_simulate_usage_errors(capsys, args):
    assert run_cli(capsys, "simulate", *args)[0] == 1


def test_simulate_csv_columns(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--events", "500", "--format", "csv")
    assert code == 0
    rows = csv_rows(out)
    assert list(rows[0]) == [
        "theta", "setting_i", "setting_j", "setting_k", "a", "b", "c",
        "count", "p_hat", "stderr", "s_hat", "s_stderr",
    ]
    assert len(rows) == 32


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("STEERCERT_SEED", "13")
    _, out, _ = run_cli(capsys, "simulate", "--events", "100")
    assert json.loads(out)["meta"]["config"]["seed"] == 13
    _, out, _ = run_cli(capsys, "simulate", "--events", "100", "--seed", "2")
    assert json.loads(out)["meta"]["config"]["seed"] == 2
    monkeypatch.setenv("STEERCERT_SEED", "abc")
    assert run_cli(capsys, "simulate", "--events", "100")[0] == 1


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"theta": "0.2pi", "events": 300, "seed": 4, "dark": 0.1}))
    _, out, _ = run_cli(capsys, "simulate", "--config", str(cfg), "--seed", "9")
    resolved = json.loads(out)["meta"]["config"]
    assert resolved["events"] == 300 and resolved["dark"] == 0.1 and resolved["seed"] == 9


def test_config_file_errors(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run_cli(capsys, "simulate", "--config", str(cfg))[0] == 1
    assert run_cli(capsys, "simulate", "--config", str(tmp_path / "missing.json"))[0] == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--theta", "0.2pi", "--events", "2000", "--seed", "5", "--dark", "0.02"],
        ["scan-theta", "--grid", "0.1pi:0.4pi:4", "--events", "500", "--format", "json"],
        ["bounds", "--samples", "64", "--seed", "3"],
    ],
)
def test_rerun_from_embedded_config_is_identical(tmp_path, capsys, argv):
    first = tmp_path / "first.out"
    assert main(argv + ["--output", str(first)]) == 0
    text = first.read_text()
    if text.startswith("#"):
        embedded = json.loads(text.splitlines()[1].removeprefix("# config: "))["config"]
    else:
        embedded = json.loads(text)["meta"]["config"]
    second = tmp_path / "second.out"
    embedded["output"] = str(second)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(embedded))
    assert main([argv[0], "--config", str(cfg)]) == 0
    capsys.readouterr()
    a, b = strip_timestamp(text), strip_timestamp(second.read_text())
    assert a.replace(str(first), str(second)) == b


def test_unknown_option_exit_code(capsys):
    assert pytest.raises(SystemExit, main, ["bounds", "--bogus"]).value.code == 1
    assert pytest.raises(SystemExit, main, []).value.code == 1


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "steercert", "scan-theta", "--grid", "0.25pi"], capture_output=True, text=True
    )
    assert res.returncode == 0
    assert "0.25" in res.stdout
