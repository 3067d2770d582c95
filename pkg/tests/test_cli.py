import csv
import io
import json
import math
import subprocess
import sys

import pytest

from multidefault import __version__
from multidefault.cli import run_command


def run(argv, capsys):
    rc = run_command(argv)
    out = capsys.readouterr()
    return rc, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO("\n".join(line for line in text.splitlines() if not line.startswith("#")))))


def header(text):
    return [line for line in text.splitlines() if line.startswith("#")][:5]


def test_validate_ok(capsys):
    rc, out, _ = run(["validate", "--model", "fixtureA"], capsys)
    assert rc == 0
    assert "# passed True" in out


def test_header_lines(capsys):
    _, out, _ = run(["validate", "--model", "fixtureC", "--tol", "1e-9"], capsys)
    h = header(out)
    assert h[0] == f"# multidefault {__version__}"
    assert h[1] == "# command validate"
    assert h[2].startswith("# config-sha256 ") and len(h[2].split()[-1]) == 64
    assert h[3].startswith("# seed")
    assert h[4] == "# tolerance 1e-09"


def test_usage_errors_exit_one(capsys):
    assert run(["bogus"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    assert run(["condexp", "--model", "fixtureA"], capsys)[0] == 1
    assert run(["validate", "--model", "fixtureA", "--tol", "-1"], capsys)[0] == 1
    assert run(["condexp", "--model", "fixtureC", "--payoff", "nonsense", "--t", "1"], capsys)[0] == 1


def test_missing_and_malformed_model_exit_one(tmp_path, capsys):
    rc, _, err = run(["validate", "--model", str(tmp_path / "none.json")], capsys)
    assert rc == 1 and "not found" in err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(["validate", "--model", str(bad)], capsys)[0] == 1


def test_invalid_model_exits_two(tmp_path, capsys):
    from multidefault.fixtures import fixture_config

    cfg = fixture_config("fixtureC")
    cfg["alpha"]["values"][1] = [[2.0 * v for v in row] for row in cfg["alpha"]["values"][1]]
    path = tmp_path / "scaled.json"
    path.write_text(json.dumps(cfg))
    rc, out, _ = run(["validate", "--model", str(path)], capsys)
    assert rc == 2 and "# passed False" in out


def test_condexp_survival(capsys):
    rc, out, _ = run(["condexp", "--model", "fixtureA", "--payoff", "survive-2", "--t", "1", "--realized", "5"], capsys)
    assert rc == 0
    table = rows(out)
    assert table[0] == ["node", "atom", "value", "flags"]
    assert float(table[1][2]) == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_price_discounts(capsys):
    base = ["--model", "fixtureA", "--payoff", "survive-2", "--realized", "5"]
    _, a, _ = run(["price", *base], capsys)
    _, b, _ = run(["price", *base, "--discount", "0.5"], capsys)
    va, vb = float(rows(a)[1][2]), float(rows(b)[1][2])
    assert va == pytest.approx(math.exp(-2.0), abs=1e-12)
    assert vb == pytest.approx(0.5 * va, abs=1e-15)


def test_direct_and_bayes_cli_agree(capsys):
    base = ["condexp", "--model", "fixtureC", "--payoff", "survive-1.5", "--t", "1"]
    _, a, _ = run(base, capsys)
    _, b, _ = run(base + ["--method", "bayes"], capsys)
    for ra, rb in zip(rows(a)[1:], rows(b)[1:]):
        assert ra[:2] == rb[:2]
        assert float(ra[2]) == pytest.approx(float(rb[2]), abs=1e-12)


def test_predict_rows(capsys):
    rc, out, _ = run(["predict", "--model", "fixtureC", "--t", "1", "--realized", "0.5,1.25"], capsys)
    assert rc == 0
    table = rows(out)
    assert table[0] == ["regime", "pins", "Z", "point", "probability"]
    assert {r[0] for r in table[1:]} == {"ordered:1"}
    assert sum(float(r[-1]) for r in table[1:]) == pytest.approx(1.0, abs=1e-12)
    # off-grid realized points are rejected as input errors
    assert run(["predict", "--model", "fixtureC", "--t", "1", "--realized", "0.5,1.5"], capsys)[0] == 1


def test_check_martingale_exit_codes(capsys):
    assert run(["check-martingale", "--model", "fixtureC"], capsys)[0] == 0
    rc, out, _ = run(["check-martingale", "--model", "fixtureC", "--candidate", "drift"], capsys)
    assert rc == 2 and "# passed False" in out
    assert run(["check-martingale", "--model", "fixtureB", "--criterion", "immersion"], capsys)[0] == 0


def test_simulate_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = ["simulate", "--model", "fixtureC", "--seed", "9", "--count", "40000"]
    assert run(base + ["--out", str(a)], capsys)[0] == 0
    assert run(base + ["--out", str(b), "--workers", "3"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert "# seed 9" in text and "# rng PCG64" in text
    assert len(rows(text)) == 40001


def test_out_dir_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("MULTIDEFAULT_OUT_DIR", str(tmp_path))
    rc, out, _ = run(["validate", "--model", "fixtureB"], capsys)
    assert rc == 0 and out == ""
    assert (tmp_path / "validate.csv").read_text().startswith("# multidefault")


def test_fixtures_command(tmp_path, capsys):
    rc, out, _ = run(["fixtures", "--out-dir", str(tmp_path)], capsys)
    assert rc == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["fixtureA.json", "fixtureB.json", "fixtureC.json", "fixtureD.json"]
    rc, _, _ = run(["validate", "--model", str(tmp_path / "fixtureD.json")], capsys)
    assert rc == 0
    assert run(["fixtures", "--out-dir", str(tmp_path), "nope"], capsys)[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "multidefault", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and __version__ in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "multidefault", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1
