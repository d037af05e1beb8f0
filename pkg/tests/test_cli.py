import json
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from framekit.cli import main
from framekit.model import MassConfig
from framekit.report import AnalysisResult, Report, render
from framekit.scenario import ANALYSES, ConfigError, parse_config, run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

GOOD = """masses = ["2", "3/7", "5"]
analyses = ["frames", "dirac-bracket"]
seed = 3
"""


def write(tmp_path, text):
    p = tmp_path / "scenario.toml"
    p.write_text(text)
    return p


def test_parse_config_orders_analyses():
    cfg = parse_config(GOOD)
    assert cfg.masses == MassConfig.of(2, Fraction(3, 7), 5)
    assert cfg.analyses == ("dirac-bracket", "frames")
    assert cfg.seed == 3 and cfg.output == "text"


@pytest.mark.parametrize("text, fragment, line", [
    ('masses = ["1", "1", "1"]\nanalyses = []\n', "nonempty", 2),
    ('masses = ["1", "1", "1"]\nanalyses = ["frames"]\ncolour = 1\n', "unknown key", 3),
    ('masses = ["1", "2/0", "1"]\nanalyses = ["frames"]\n', "malformed", 1),
    ('masses = ["1", "-1", "1"]\nanalyses = ["frames"]\n', "positive", 1),
    ('masses = ["1", "1"]\nanalyses = ["frames"]\n', "three-particle", 1),
    ('masses = ["1", "1", "1"]\nanalyses = ["nope"]\n', "unknown analysis", 2),
    ('masses = ["1", "1", "1"]\nanalyses = ["frames"]\nseed = "x"\n', "seed", 3),
    ('masses = ["1", "1", "1"]\nanalyses = ["frames"]\noutput = "xml"\n', "output", 3),
    ('masses = ["1", "1", "1"\n', "invalid TOML", 1),
])
def test_config_errors_have_positions(text, fragment, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)
    assert exc.value.line == line
    assert f"line {line}, column" in str(exc.value)


def test_missing_key():
    with pytest.raises(ConfigError, match="analyses"):
        parse_config('masses = ["1", "1", "1"]\n')


def test_float_masses_rejected():
    with pytest.raises(ConfigError):
        parse_config('masses = [1.5, 1, 1]\nanalyses = ["frames"]\n')


def test_render_rules():
    assert render(Fraction(-1, 3)) == "-1/3"
    assert render(4) == 4
    assert render(0.1 + 0.2) == "0.3"
    assert render(np.array([Fraction(1, 2), Fraction(2)], dtype=object)) == ["1/2", "2"]
    with pytest.raises(TypeError):
        render(object())


def test_report_shape():
    rep = Report("run", {"seed": 1}, [AnalysisResult("a", True, {"x": Fraction(1, 2)}),
                                     AnalysisResult("b", False, {}, error="boom")])
    d = json.loads(rep.to_json())
    assert d["verdict"] == "fail"
    assert d["results"][0] == {"name": "a", "verdict": "pass", "data": {"x": "1/2"}}
    assert d["results"][1]["error"] == "boom"
    text = rep.to_text()
    assert "[PASS] a" in text and "[FAIL] b" in text and text.endswith("overall: fail\n")
    assert not Report("run", {}).passed


def test_run_scenario_all_analyses():
    cfg = parse_config((SCENARIOS / "generic.toml").read_text())
    assert cfg.analyses == ANALYSES
    rep = run_scenario(cfg)
    assert rep.passed, [r.name for r in rep.results if not r.passed]
    assert all(r.measured is not None and r.elapsed is None for r in rep.results)


def test_cli_run_is_byte_stable(tmp_path, capsys):
    path = write(tmp_path, GOOD)
    assert main(["run", "--config", str(path), "--emit", "json"]) == 0
    first = capsys.readouterr().out
    assert main(["run", "--config", str(path), "--emit", "json"]) == 0
    assert capsys.readouterr().out == first
    data = json.loads(first)
    assert data["scenario"]["masses"] == ["2", "3/7", "5"]
    assert "elapsed_s" not in data["results"][0]


def test_cli_timing_flag(tmp_path, capsys):
    assert main(["run", "--config", str(write(tmp_path, GOOD)), "--timing", "--emit", "json"]) == 0
    assert all("elapsed_s" in r for r in json.loads(capsys.readouterr().out)["results"])


def test_cli_seed_changes_samples_not_verdicts(tmp_path, capsys):
    path = write(tmp_path, 'masses = ["2", "3/7", "5"]\nanalyses = ["abelianize", "gaussian"]\n')
    outs = []
    for seed in ("7", "8"):
        assert main(["run", "--config", str(path), "--seed", seed, "--emit", "json"]) == 0
        outs.append(json.loads(capsys.readouterr().out))
    assert [r["verdict"] for r in outs[0]["results"]] == [r["verdict"] for r in outs[1]["results"]]
    assert outs[0]["results"] != outs[1]["results"]


def test_cli_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["run", "--config", str(write(tmp_path, "masses = 3\nanalyses = [\"frames\"]\n"))]) == 2
    err = capsys.readouterr().err
    assert "line 1, column 1" in err
    assert main(["verify", "--only", "nope"]) == 2


def test_cli_failed_verdict_exits_one(tmp_path, capsys, monkeypatch):
    import framekit.scenario as scenario
    monkeypatch.setitem(scenario.RUNNERS, "frames", lambda masses, seed: 1 / 0)
    assert main(["run", "--config", str(write(tmp_path, GOOD))]) == 1
    out = capsys.readouterr().out
    assert "[FAIL] frames" in out and "ZeroDivisionError" in out


def test_cli_verify_subset(capsys):
    assert main(["verify", "--only", "frames", "--emit", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["kind"] == "verify" and data["verdict"] == "pass"
    assert len(data["results"]) >= 1
