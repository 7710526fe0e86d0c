import json
import math
import pathlib

import pytest

from lindcomp.cli import main
from lindcomp.estimator import SimPlan


def write_config(tmp_path, body):
    path = tmp_path / "run.ini"
    path.write_text(body)
    return str(path)


AD_CONFIG = """
[problem]
preset = amplitude-damping
gamma = 1.5

[run]
T = 1.0
epsilon = 0.05
delta = 0.05
seed = 7
rounds = 20000

[output]
with_exact = true
"""


def test_simulate_amplitude_damping(tmp_path, capsys):
    cfg = write_config(tmp_path, AD_CONFIG)
    out = tmp_path / "ad.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rows = out.read_text().strip().splitlines()
    assert rows[0] == "time,estimate,stderr,exact,abs_error"
    last = rows[-1].split(",")
    assert float(last[0]) == pytest.approx(1.0)
    report = json.loads((tmp_path / "ad.json").read_text())
    tol = 3 * report["stderr"] + report["bias_budget"]
    assert abs(float(last[1]) - math.exp(-1.5)) <= tol
    assert abs(float(last[3]) - math.exp(-1.5)) < 1e-9
    assert set(report) >= {"mean", "stderr", "mu_total", "bias_budget", "rounds", "plan"}


def test_simulate_deterministic_output(tmp_path):
    cfg = write_config(tmp_path, AD_CONFIG.replace("20000", "3000"))
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out1)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_plan_round_trip(tmp_path):
    cfg = write_config(tmp_path, AD_CONFIG.replace("20000", "1000"))
    out = tmp_path / "r.csv"
    main(["simulate", "--config", cfg, "--out", str(out)])
    plan_dict = json.loads((tmp_path / "r.json").read_text())["plan"]
    again = SimPlan(**plan_dict)
    assert again.tau == plan_dict["tau"] and again.rounds == 1000


def test_simulate_inline_problem(tmp_path):
    body = """
[problem]
hamiltonian = 0.2 0 X
jump1 = 0.6123724356957945 0 X
    0 0.6123724356957945 Y
observable = 0.5 0 I
    -0.5 0 Z
initial = 1

[run]
T = 0.5
rounds = 2000
seed = 3
"""
    cfg = write_config(tmp_path, body)
    out = tmp_path / "inline.csv"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    assert out.exists()


def test_resources_tfi20(tmp_path):
    body = """
[problem]
preset = tfi
n = 20

[run]
T = 1.0
epsilons = 0.1,0.01,0.001
"""
    cfg = write_config(tmp_path, body)
    out = tmp_path / "res.csv"
    assert main(["resources", "--config", cfg, "--out", str(out)]) == 0
    rows = [r.split(",") for r in out.read_text().strip().splitlines()]
    assert rows[0] == ["epsilon", "method", "steps", "K", "rz_total", "cnot_total"]
    trot = [r for r in rows[1:] if r[1] == "trotter"]
    two = [r for r in rows[1:] if r[1] == "two-stage"]
    for r in trot:
        steps = int(r[2])
        assert int(r[4]) == 42 * steps and int(r[5]) == 44 * steps
    for r in two:
        steps, K = int(r[2]), int(r[3])
        assert int(r[4]) == 51 * steps and int(r[5]) == (48 + 16 * K) * steps


def test_resources_empty_grid(tmp_path):
    body = AD_CONFIG + "\n"
    cfg = write_config(tmp_path, body)
    out = tmp_path / "empty.csv"
    assert main(["resources", "--config", cfg, "--epsilons", "", "--out", str(out)]) == 0
    assert out.read_text().strip() == "epsilon,method,steps,K,rz_total,cnot_total"


def test_validate_passes(capsys):
    assert main(["validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines and all("pass" in line for line in lines)
    assert any("1.58333" in line for line in lines)


def test_config_error_exit_code(tmp_path):
    missing = str(tmp_path / "nope.ini")
    assert main(["simulate", "--config", missing]) == 2
    bad = write_config(tmp_path, "[problem]\n")
    assert main(["simulate", "--config", bad]) == 2


def test_infeasible_plan_exit_code(tmp_path, monkeypatch):
    import lindcomp.cli as cli
    from lindcomp.estimator import PlanInfeasible

    def boom(*a, **k):
        raise PlanInfeasible("forced")

    monkeypatch.setattr(cli, "plan", boom)
    cfg = write_config(tmp_path, AD_CONFIG)
    assert main(["simulate", "--config", cfg]) == 3
