import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from epia.cli import main

REPO = Path(__file__).resolve().parent.parent
CONFIGS = REPO / "configs"


def write_config(tmp_path, name="cfg.toml", **overrides):
    base = {
        "problem": {"family": "bounded-trig", "lambda": 1.0, "rho": 10.0},
        "discretization": {
            "box": [[-2.0, 2.0]],
            "n": [65],
            "core_fraction": 0.6,
            "action_nodes": 8,
            "bc": "zero-dirichlet",
        },
        "pia": {"max_iters": 20, "delta_tol": 1e-9},
        "output": {"dir": str(tmp_path / "out")},
    }
    for key, val in overrides.items():
        if key == "problem":
            base[key] = val
        elif isinstance(val, dict):
            base.setdefault(key, {}).update(val)
        else:
            base[key] = val
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return path


def test_run_minimal_config(tmp_path):
    cfg = write_config(tmp_path)
    code = main(["run", "--config", str(cfg)])
    assert code == 0
    out = tmp_path / "out"
    for artifact in ("config_echo.json", "summary.json", "trace.csv",
                     "v_final.bin", "v_final.csv"):
        assert (out / artifact).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True
    assert summary["version"]
    echo = json.loads((out / "config_echo.json").read_text())
    assert echo["version"] == summary["version"]
    assert echo["pia"]["max_iters"] == 20  # defaults made explicit
    assert "delta_tol" in echo["pia"]


def test_run_nonconvergence_exit_code(tmp_path):
    cfg = write_config(tmp_path, pia={"max_iters": 1, "delta_tol": 1e-14})
    assert main(["run", "--config", str(cfg)]) == 2


def test_missing_config_is_config_error(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1


def test_malformed_config_is_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("problem = [unterminated")
    assert main(["run", "--config", str(bad)]) == 1


def test_strict_mode_blocks_violations(tmp_path):
    cfg = write_config(
        tmp_path,
        problem={"family": "linear-growth", "rho": 24.0},
        discretization={"bc": "bound-dirichlet"},
    )
    assert main(["run", "--config", str(cfg), "--strict"]) == 1
    assert main(["run", "--config", str(cfg)]) == 0


def test_sweep_rho_wiring(tmp_path):
    cfg = write_config(
        tmp_path,
        analysis={"alpha": 0.5, "rho_list": [10.0, 20.0, 40.0]},
    )
    code = main(["sweep", "--config", str(cfg), "--sweep", "rho"])
    assert code == 0
    table = (tmp_path / "out" / "sweep_rho.csv").read_text().strip().splitlines()
    assert len(table) == 4
    assert table[0].startswith("rho,")


def test_sweep_empty_list_is_config_error(tmp_path):
    cfg = write_config(tmp_path, analysis={"rho_list": []})
    assert main(["sweep", "--config", str(cfg), "--sweep", "rho"]) == 1


def test_sweep_eps0_floor_monotone(tmp_path):
    cfg = write_config(
        tmp_path,
        problem={"family": "small-diffusion", "rho": 16.0,
                 "params": {"omega": 9.0, "depth": 5}},
        discretization={"n": [129]},
        pia={"max_iters": 12, "delta_tol": 0.0},
        analysis={"eps0_list": [0.0, 0.025, 0.05]},
    )
    code = main(["sweep", "--config", str(cfg), "--sweep", "eps0"])
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    floors = [row["floor"] for row in summary["rows"]]
    assert floors == sorted(floors)


def test_verify_subcommand(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path / "v")])
    assert code == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "[FAIL]" not in out
    report = json.loads((tmp_path / "v" / "verify_report.json").read_text())
    assert report["ok"] is True
    assert report["recursion_discrepancy"]["flagged"] is True


def test_mc_check_rejects_small_npaths(tmp_path):
    cfg = write_config(tmp_path, mc={"npaths": 10, "points": [[0.0]]})
    assert main(["mc-check", "--config", str(cfg)]) == 1


def test_mc_check_constant_instance(tmp_path):
    cfg = write_config(
        tmp_path,
        problem={
            "name": "constant-reward",
            "expressions": {"r": "1", "b": ["0"], "sigma": [["1"]]},
            "lambda": 1.0,
            "rho": 2.0,
            "growth": {"N": 0, "A1": 1.0, "A2": 1.0, "A3": 1.0},
            "ellipticity": 1.0,
        },
        discretization={"box": [[-24.0, 24.0]], "n": [97],
                        "core_fraction": 0.2, "bc": "zero-dirichlet"},
        mc={"npaths": 1000, "dt": 0.005, "T": 10.0, "seed": 3,
            "points": [[0.0]], "bias_constant": 10.0},
    )
    assert main(["mc-check", "--config", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["mc_points"][0]["ok"] is True


def _run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "epia.cli", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
    )


def test_rerun_reproducibility_bytes(tmp_path):
    cfg = write_config(tmp_path, output={"dir": str(tmp_path / "a")})
    r1 = _run_cli(["run", "--config", str(cfg), "--threads", "1"], REPO)
    assert r1.returncode == 0, r1.stderr
    shutil.move(tmp_path / "a", tmp_path / "first")
    r2 = _run_cli(["run", "--config", str(cfg), "--threads", "1"], REPO)
    assert r2.returncode == 0, r2.stderr
    first = (tmp_path / "first" / "summary.json").read_bytes()
    second = (tmp_path / "a" / "summary.json").read_bytes()
    assert first == second


def test_parallel_sweep_matches_serial(tmp_path):
    cfg = write_config(
        tmp_path,
        discretization={"n": [65]},
        analysis={"rho_list": [10.0, 20.0]},
        output={"dir": str(tmp_path / "serial")},
    )
    assert main(["sweep", "--config", str(cfg), "--sweep", "rho"]) == 0
    cfg2 = write_config(
        tmp_path,
        name="cfg2.toml",
        discretization={"n": [65]},
        analysis={"rho_list": [10.0, 20.0]},
        output={"dir": str(tmp_path / "par")},
    )
    r = _run_cli(
        ["sweep", "--config", str(cfg2), "--sweep", "rho", "--threads", "2"],
        REPO,
    )
    assert r.returncode == 0, r.stderr
    serial = json.loads((tmp_path / "serial" / "summary.json").read_text())
    par = json.loads((tmp_path / "par" / "summary.json").read_text())
    for row_s, row_p in zip(serial["rows"], par["rows"]):
        for key, val in row_s.items():
            if isinstance(val, float):
                assert val == pytest.approx(row_p[key], rel=1e-13)
            else:
                assert val == row_p[key]


def test_shipped_configs_load():
    from epia.cli import load_config, _build

    for name in ("bounded_trig.toml", "linear_growth.toml", "rho_sweep.toml",
                 "eps0_sweep.toml", "ou_mc_check.json"):
        cfg = load_config(CONFIGS / name)
        problem, disc = _build(cfg)
        assert problem.state_dim == disc.grid.dim


def test_plots_flag_emits_svg(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = write_config(tmp_path, reference={"enabled": True, "factor": 2})
    assert main(["run", "--config", str(cfg), "--plots"]) == 0
    assert (tmp_path / "out" / "convergence.svg").exists()


def test_expression_config_does_not_inherit_default_family():
    from epia.cli import load_config, _build
    import numpy as np

    cfg = load_config(CONFIGS / "ou_mc_check.json")
    assert "family" not in cfg["problem"]
    problem, _ = _build(cfg)
    x = np.array([[0.5]])
    u = np.array([[0.3]])
    assert float(problem.reward(x, u)[0]) == pytest.approx(0.25)
    assert float(problem.drift(x, u)[0, 0]) == pytest.approx(-0.5)
