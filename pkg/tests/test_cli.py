import csv
import json
import math

import pytest

from lindstedt.cli import OUTPUT_ENV, load_config, main, output_dir
from lindstedt.errors import ConfigError


def run(tmp_path, *args):
    out = tmp_path / "out"
    code = main([*args, "--output", str(out)])
    return code, out


def test_solve_default(tmp_path):
    code, out = run(tmp_path, "solve")
    assert code == 0
    report = json.loads((out / "solve.json").read_text())
    assert abs(report["residual"]["slope"] - 3) <= 0.2
    assert json.loads((out / "config.json").read_text())["mu"] == "987/1597"


def test_solve_leading_only(tmp_path):
    code, out = run(tmp_path, "solve", "--K", "0")
    assert code == 0
    rows = list(csv.DictReader((out / "samples.csv").open()))
    q0 = math.sqrt(2) / 3
    for r in rows:
        x1, x2, t = float(r["x1"]), float(r["x2"]), float(r["t"])
        expected = q0 * math.cos(t) * math.sin(x1) * math.sin(x2)
        assert float(r["u"]) == pytest.approx(expected, abs=1e-12)


def test_zero_mu_refused_without_resonant_flag(tmp_path, capsys):
    code, _ = run(tmp_path, "solve", "--mu", "0")
    assert code == 1
    assert "mu non-resonance" in capsys.readouterr().err


def test_resonant_solve(tmp_path):
    code, out = run(tmp_path, "solve", "--resonant", "--mu", "0", "--K", "1")
    assert code == 0
    report = json.loads((out / "solve.json").read_text())
    assert abs(report["residual"]["slope"] - 2) <= 0.2


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code = main(["solve", "--config", str(cfg), "--output", str(tmp_path / "o")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_config_loading_and_output_precedence(tmp_path, monkeypatch):
    cfg = load_config(None, {"K": 1})
    assert cfg["K"] == 1 and cfg["D"] == 2
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"clusters": {"nope": 1}}))
    with pytest.raises(ConfigError):
        load_config(str(nested))
    nested.write_text(json.dumps({"clusters": {"C2": 1.0}}))
    assert load_config(str(nested))["clusters"]["alpha"] == 0.1
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert output_dir(cfg) == tmp_path / "env"
    assert output_dir(cfg, str(tmp_path / "flag")) == tmp_path / "flag"
    monkeypatch.delenv(OUTPUT_ENV)
    assert str(output_dir(cfg)) == cfg["output_dir"]


def test_measure_monotone(tmp_path):
    code, out = run(tmp_path, "measure")
    assert code == 0
    report = json.loads((out / "measure.json").read_text())
    fr = [r["fraction"] for r in report["series"]]
    assert fr == sorted(fr) and fr[-1] > 0.99 and report["non_decreasing"]


def test_measure_empty_grid(tmp_path, capsys):
    code, _ = run(tmp_path, "measure", "--eps-grid", "")
    assert code == 2


def test_measure_resonant(tmp_path):
    code, out = run(tmp_path, "measure", "--resonant", "--mu", "0", "--eps-grid", "0.01")
    assert code == 0


def test_deterministic_outputs(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for target in (a, b):
        assert main(["solve", "--output", str(target)]) == 0
        assert main(["measure", "--eps-grid", "0.05", "--output", str(target)]) == 0
    for name in ("coefficients.csv", "samples.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    sweeps = sorted(p.name for p in a.glob("*.csv"))
    assert sweeps
    for name in sweeps:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_clusters_and_bifurcate(tmp_path):
    code, out = run(tmp_path, "clusters")
    assert code == 0
    code, out = run(tmp_path, "bifurcate", "--N", "2")
    assert code == 0
    packet = json.loads((out / "packet.json").read_text())
    assert packet["packet"]["N"] == 2
    assert (out / "determinants.csv").read_text().startswith("s,sign")


@pytest.mark.parametrize("arith", ["rational", "float"])
def test_verify_suites(tmp_path, arith):
    code, out = run(tmp_path, "verify", "--arithmetic", arith, "--suites",
                    "symmetry,partition,clusters,loops")
    assert code == 0
    report = json.loads((out / "verify.json").read_text())
    assert all(v["passed"] for v in report["suites"].values())


def test_verify_detects_corrupt_counterterm(tmp_path, capsys):
    code, _ = run(tmp_path, "verify", "--suites", "symmetry", "--corrupt-counterterm")
    assert code == 1
    assert "symmetry" in capsys.readouterr().err


def test_verify_unknown_suite(tmp_path):
    code, _ = run(tmp_path, "verify", "--suites", "nope")
    assert code == 2
