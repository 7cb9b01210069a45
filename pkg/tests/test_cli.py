import csv
import json
import math

import pytest

from neutral_stability.cli import (
    CliError, example2_summary, main, parse_criteria, parse_range, sweep,
)
from neutral_stability.model import load_example

DECAY = 't0 = 0\na = "0"\nb = "1"\ng = "t"\nh = "t"\nphi = "1"\n'


@pytest.fixture
def decay_cfg(tmp_path):
    p = tmp_path / "decay.toml"
    p.write_text(DECAY)
    return p


def test_check_example2(capsys, tmp_path):
    out = tmp_path / "v.json"
    assert main(["check", "example2.toml", "--json", str(out)]) == 0
    text = capsys.readouterr().out
    line = next(l for l in text.splitlines() if l.startswith("pantograph_b"))
    assert "AsymptoticallyStable" in line
    margin = float(line.split()[2])
    assert margin == pytest.approx(1 + 1 / math.e - 2 / 3 - math.log(2), abs=1e-5)
    doc = json.loads(out.read_text())
    assert doc["schema"] == 1
    v = next(v for v in doc["verdicts"] if v["criterion_id"] == "pantograph_b")
    assert {"description", "value", "bound", "margin", "satisfied"} <= set(v["hypotheses"][0])
    assert v["window"] == [1.0, 201.0]


def test_check_all_inconclusive_exit_2(capsys):
    code = main(["check", "example1.toml", "--set", "alpha=0.12", "--set", "a0=0.49"])
    assert code == 2
    body = capsys.readouterr().out
    assert "ExponentiallyStable" not in body and "AsymptoticallyStable" not in body


def test_check_missing_file(capsys, tmp_path):
    assert main(["check", str(tmp_path / "nope.toml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_check_config_error_names_key(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text(DECAY.replace('b = "1"', 'b = "1 +"'))
    assert main(["check", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "'b'" in err and "offset" in err


def test_check_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["check", "example1.toml", "--criteria", "thm1,cor2b", "--json", str(a)])
    main(["check", "example1.toml", "--criteria", "thm1,cor2b", "--json", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_simulate_zero_delay(decay_cfg, tmp_path, capsys):
    out = tmp_path / "x.csv"
    assert main(["simulate", str(decay_cfg), "--dt", "1e-3", "--until", "1", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "x", "y"]
    t, x = float(rows[-1][0]), float(rows[-1][1])
    assert t == 1.0 and abs(x - 0.3678794) <= 1e-4


def test_simulate_with_fit(tmp_path, capsys):
    out = tmp_path / "x2.csv"
    assert main(["simulate", "example2.toml", "--dt", "1e-3", "--until", "200",
                 "--out", str(out), "--fit", "alg"]) == 0
    fit = json.loads((tmp_path / "x2.csv.fit.json").read_text())["fit"]
    assert fit["kind"] == "algebraic" and fit["gamma"] > 0


def test_simulate_until_before_start(decay_cfg, capsys):
    assert main(["simulate", str(decay_cfg), "--until", "-1"]) == 1


def test_simulate_solver_error_reports_time(tmp_path, capsys):
    bad = tmp_path / "future.toml"
    bad.write_text(DECAY.replace('h = "t"', 'h = "t + 1"'))
    assert main(["simulate", str(bad), "--until", "2", "--out", str(tmp_path / "o.csv")]) == 1
    assert "t=" in capsys.readouterr().err


def test_sweep_thm1_and_tangzou(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "example1.toml", "--param", "alpha", "--range", "0.05:0.12:0.01",
                 "--criteria", "thm1+prop_tangzou", "--bisect", "--horizon", "100",
                 "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    flips = {l.split()[1].rstrip(":"): float(l.split("estimate ")[1].split()[0])
             for l in text.splitlines() if l.startswith("flip")}
    k = math.pi + 0.2
    assert flips["thm1"] == pytest.approx(1 / (math.e * k), abs=1e-4)
    assert flips["prop_tangzou"] == pytest.approx(0.2 / k, abs=1e-4)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["alpha", "thm1", "prop_tangzou", "any_stable"]
    assert len(rows) == 9


def test_sweep_errors(capsys):
    assert main(["sweep", "example1.toml", "--param", "beta", "--range", "0:1:0.5"]) == 1
    assert main(["sweep", "example1.toml", "--param", "alpha", "--range", "1:0:0.1"]) == 1


def test_sweep_values_and_flip_bracketing():
    spec = load_example("example1")
    res = sweep(spec, "alpha", [0.1, 0.105, 0.115], ["thm1"], 60)
    assert res.verdicts["thm1"] == ["ExponentiallyStable", "ExponentiallyStable", "Inconclusive"]
    (f,) = [f for f in res.flip_points if f.criterion == "thm1"]
    assert (f.lo, f.hi) == (0.105, 0.115) and f.stable_below
    with pytest.raises(CliError):
        sweep(spec, "alpha", [0.2, 0.1], ["thm1"], 60)


def test_parse_helpers():
    assert parse_criteria("all")[0] == "thm1"
    assert parse_criteria("thm1+cor2b") == ["thm1", "cor2b"]
    with pytest.raises(CliError):
        parse_criteria("thm9")
    assert list(parse_range("0:0.2:0.1")) == [0.0, 0.1, 0.2]
    with pytest.raises(CliError):
        parse_range("0:0:1")


def test_example2_summary_numbers():
    s = example2_summary()
    assert s["delay_integral"]["computed"] == pytest.approx(math.log(2), abs=1e-6)
    assert s["upper_bound"]["computed"] == pytest.approx(0.701213, abs=1e-6)
    assert s["verdict"]["conclusion"] == "AsymptoticallyStable"


def test_examples_command_writes_summary(tmp_path, capsys):
    assert main(["examples", "--which", "2", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "0.693147" in text and "0.701213" in text and "AsymptoticallyStable" in text
    assert (tmp_path / "example2_summary.json").is_file()


def test_module_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "neutral_stability", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
