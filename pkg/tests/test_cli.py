import json
import math

import pytest

from pfloquet import cli
from pfloquet.config import preset_names
from pfloquet.report import RunResults, emit_report

SMALL_SCALAR = """
[driving]
kind = torus
alpha = 1.0

[system]
type = delay
grid = 50
A = 0
B = 1

[run]
horizon = 40
samples = 3
"""

SMALL_HEAT = """
[driving]
kind = torus
alpha = 1.0

[system]
type = parabolic
profile = heat
grid = 19
diffusion = 0.2

[run]
horizon = 30
samples = 3
"""


@pytest.fixture
def config_file(tmp_path_factory):
    folder = tmp_path_factory.mktemp("configs")

    def write(text, name="small"):
        path = folder / f"{name}.ini"
        path.write_text(text)
        return str(path)

    return write


def run(*argv):
    return cli.main(list(argv))


def summary(directory):
    return json.loads((directory / "summary.json").read_text())


def test_list_presets(capsys):
    assert run("list-presets") == 0
    assert capsys.readouterr().out.split() == preset_names()


def test_usage_errors():
    assert run() == 2
    assert run("estimate-lyapunov") == 2
    assert run("estimate-lyapunov", "--preset", "scalar-dde", "--config", "x.ini") == 2
    assert run("estimate-lyapunov", "--preset", "scalar-dde", "--seed", "-1") == 2
    assert run("--help") == 0


def test_missing_config(tmp_path):
    assert run("estimate-lyapunov", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path)) == 2
    assert run("estimate-lyapunov", "--preset", "no-such-preset", "--out", str(tmp_path)) == 2


def test_scalar_estimate(tmp_path, config_file, capsys):
    assert run("estimate-lyapunov", "--config", config_file(SMALL_SCALAR), "--out", str(tmp_path)) == 0
    data = summary(tmp_path)
    assert abs(data["lambda1"] - 0.5671432904097838) <= 1e-3
    assert data["system"] == "small" and data["system_type"] == "delay"
    assert data["failing"] == []
    assert [c["name"] for c in data["checks"]] == ["initial-condition-spread"]
    assert "PASS initial-condition-spread" in capsys.readouterr().out


def test_csv_trace_format(tmp_path, config_file):
    run("estimate-lyapunov", "--config", config_file(SMALL_SCALAR), "--out", str(tmp_path))
    raw = (tmp_path / "lyapunov_trace.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0].split(",")[0] == "step"
    assert len(lines) == 41


def test_json_only_skips_csv(tmp_path, config_file):
    run("estimate-lyapunov", "--config", config_file(SMALL_SCALAR), "--out", str(tmp_path), "--json-only")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["summary.json"]


def test_reruns_are_identical_except_timestamp(tmp_path, config_file):
    path = config_file(SMALL_HEAT)
    for d in ("a", "b"):
        assert run("separation", "--config", path, "--out", str(tmp_path / d)) == 0
    first, second = summary(tmp_path / "a"), summary(tmp_path / "b")
    first.pop("generated_at"), second.pop("generated_at")
    assert first == second


def test_seed_override_changes_omega(tmp_path, config_file):
    path = config_file(SMALL_HEAT)
    run("estimate-lyapunov", "--config", path, "--out", str(tmp_path / "a"), "--seed", "1")
    run("estimate-lyapunov", "--config", path, "--out", str(tmp_path / "b"), "--seed", "2")
    assert summary(tmp_path / "a")["omega"] != summary(tmp_path / "b")["omega"]
    assert summary(tmp_path / "a")["omega_seed"] == 1


def test_separation_reports_gap(tmp_path, config_file):
    assert run("separation", "--config", config_file(SMALL_HEAT), "--out", str(tmp_path)) == 0
    data = summary(tmp_path)
    assert data["sigma"] == data["lambda1"] - data["lambda2"]
    assert data["sigma"] > 0


def test_separation_needs_adjoint(tmp_path, config_file):
    assert run("separation", "--config", config_file(SMALL_SCALAR), "--out", str(tmp_path)) == 2


def test_floquet_and_oracle_on_heat(tmp_path, config_file):
    path = config_file(SMALL_HEAT)
    assert run("floquet", "--config", path, "--out", str(tmp_path / "f")) == 0
    assert (tmp_path / "f" / "floquet_vector.csv").exists()
    assert run("oracle-compare", "--config", path, "--out", str(tmp_path / "o")) == 0
    names = [c["name"] for c in summary(tmp_path / "o")["checks"]]
    assert "oracle-elliptic-eigenvalue" in names


def test_no_oracle_is_a_configuration_error(tmp_path):
    assert run("oracle-compare", "--preset", "quasiperiodic-parabolic", "--out", str(tmp_path)) == 2


def test_coupled_assumptions(tmp_path):
    assert run("verify-assumptions", "--preset", "coupled-dde-N2", "--out", str(tmp_path)) == 0
    data = summary(tmp_path)
    assert data["beta_lower"] == pytest.approx(0.5) and data["beta_upper"] == pytest.approx(54.0)
    assert data["failing"] == []


def test_failing_check_exits_one(tmp_path, config_file):
    tight = SMALL_SCALAR + "oracle_tolerance = 1e-300\n"
    assert run("oracle-compare", "--config", config_file(tight), "--out", str(tmp_path)) == 1
    assert summary(tmp_path)["failing"] == ["oracle-characteristic-root"]


def test_default_output_directory(tmp_path, config_file, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run("estimate-lyapunov", "--config", config_file(SMALL_SCALAR, "named"), "--json-only") == 0
    assert (tmp_path / "results" / "named" / "estimate-lyapunov" / "summary.json").exists()


def test_unwritable_output(tmp_path, config_file):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("estimate-lyapunov", "--config", config_file(SMALL_SCALAR), "--out", str(blocker / "sub")) == 3


def test_empty_report(tmp_path):
    path = emit_report(RunResults("delay", 7), tmp_path, timestamp="2020-01-01T00:00:00+00:00")
    data = json.loads(path.read_text())
    assert data == {
        "system": "delay",
        "omega_seed": 7,
        "checks": [],
        "failing": [],
        "traces": [],
        "generated_at": "2020-01-01T00:00:00+00:00",
    }


def test_nonfinite_values_are_strings(tmp_path):
    results = RunResults("parabolic", 0, lambda1=-math.inf)
    results.add_check("x", False, math.nan)
    data = json.loads(emit_report(results, tmp_path).read_text())
    assert data["lambda1"] == "-inf"
    assert data["checks"] == [{"name": "x", "pass": False, "margin": "nan"}]
