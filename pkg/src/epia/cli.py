"""Command-line entry point: config-driven experiments with reproducible
artifacts (CSV tables, JSON summaries, field binaries, optional SVG plots).

Subcommands: ``run``, ``sweep``, ``verify``, ``mc-check``.  Exit codes:
0 success, 1 configuration error, 2 non-convergence or failed rows.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import _kernels
from .analysis import fit_geometric_rate
from .discretize import build_grid, build_action_quadrature, write_field_binary, write_field_csv
from .linsolve import SOLVER_TOL
from .mcoracle import mc_value
from .pia import Discretization, pia_run, pia_step, PiaState, reference_solution
from .problem import (
    ProblemValidationError,
    problem_from_dict,
    validate_problem,
)
from .verify import run_verification_suite

logger = logging.getLogger(__name__)

_DEFAULTS = {
    "problem": {"family": "bounded-trig", "lambda": 1.0, "rho": 10.0, "params": {}},
    "discretization": {
        "box": [[-2.0, 2.0]],
        "n": [129],
        "core_fraction": 0.5,
        "action_nodes": 8,
        "bc": "linear-extrapolation",
    },
    "pia": {"max_iters": 40, "delta_tol": 1e-8},
    "reference": {"enabled": False, "factor": 2},
    "analysis": {"alpha": 0.5, "rho_list": [], "eps0_list": []},
    "mc": {"npaths": 10000, "dt": 0.0, "T": 0.0, "seed": 1234, "points": [[0.0]],
           "bias_constant": 10.0},
    "output": {"dir": "epia-out", "export_policy": False},
}


class ConfigError(ValueError):
    pass


def _merge(defaults, overrides):
    out = dict(defaults)
    for key, val in (overrides or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def _merge_config(raw):
    cfg = _merge(_DEFAULTS, raw)
    # an expression-defined problem must not inherit the default family
    if "expressions" in cfg.get("problem", {}):
        cfg["problem"].pop("family", None)
        cfg["problem"].pop("params", None)
    return cfg


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
            raw = json.loads(text)
        else:
            try:
                import tomllib as toml
            except ModuleNotFoundError:
                import tomli as toml
            raw = toml.loads(text)
    except Exception as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return _merge_config(raw)


def _build(cfg):
    problem = problem_from_dict(cfg["problem"])
    dz = cfg["discretization"]
    grid = build_grid(dz["box"], dz["n"], dz["core_fraction"])
    if grid.dim != problem.state_dim:
        raise ConfigError(
            f"grid dimension {grid.dim} != problem state dimension "
            f"{problem.state_dim}"
        )
    quad = build_action_quadrature(problem.action_dim, int(dz["action_nodes"]))
    disc = Discretization(grid=grid, quad=quad, bc=dz["bc"])
    return problem, disc


def _prepare_outdir(cfg, out_override):
    outdir = Path(out_override or cfg["output"]["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    echo = dict(cfg)
    echo["version"] = __version__
    echo["kernel_backend"] = _kernels.BACKEND
    with open(outdir / "config_echo.json", "w") as fh:
        json.dump(echo, fh, indent=2, sort_keys=True)
    return outdir


def _write_summary(outdir, summary):
    summary = dict(summary)
    summary["version"] = __version__
    summary["kernel_backend"] = _kernels.BACKEND
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def _maybe_validate(problem, strict, box=None):
    report = validate_problem(problem, strict=False, box=box)
    for line in report.lines():
        logger.info("%s", line)
    if report.violations():
        msg = "assumption check flagged: " + ", ".join(report.violations())
        if strict:
            raise ProblemValidationError(msg)
        logger.warning("%s (continuing; use --strict to abort)", msg)
    return report


def _plot_series(outdir, name, xs, series, xlabel, ylabel, logx=False, logy=True):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        logger.warning("matplotlib unavailable; skipping plot %s", name)
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", markersize=3, label=label)
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(outdir / name)
    plt.close(fig)


def cmd_run(args):
    cfg = load_config(args.config)
    problem, disc = _build(cfg)
    outdir = _prepare_outdir(cfg, args.out)
    _maybe_validate(problem, args.strict, box=list(disc.grid.box))

    reference = None
    ref_info = None
    if cfg["reference"]["enabled"]:
        reference, ref_info = reference_solution(
            problem, disc, factor=int(cfg["reference"]["factor"])
        )
    result = pia_run(
        problem,
        disc,
        max_iters=int(cfg["pia"]["max_iters"]),
        delta_tol=float(cfg["pia"]["delta_tol"]),
        reference=reference,
        alpha=float(cfg["analysis"]["alpha"]),
    )
    result.trace.to_csv(outdir / "trace.csv")
    write_field_binary(result.state.v, outdir / "v_final.bin")
    write_field_csv(result.state.v, outdir / "v_final.csv")
    if cfg["output"]["export_policy"] and result.state.policy is not None:
        result.state.policy.to_csv(outdir / "policy.csv")

    summary = {
        "problem": problem.name,
        "converged": result.converged,
        "iters": result.iters,
        "final_delta_sup_core": result.trace.records[-1].delta_sup_core,
        "sup_v": result.trace.records[-1].sup_v,
        "solver_tol": SOLVER_TOL,
    }
    if reference is not None:
        errs = result.trace.column("weighted_err")
        summary["final_weighted_err"] = float(errs[-1])
        summary["final_err_sup_core"] = result.trace.records[-1].err_sup_core
        summary["reference_residual"] = ref_info.residual_core_max
        try:
            fit = fit_geometric_rate(errs)
            summary["fitted_rate"] = {"q": fit.q, "floor": fit.floor}
        except ValueError as exc:
            summary["fitted_rate"] = {"error": str(exc)}
    _write_summary(outdir, summary)
    if args.plots:
        ns = result.trace.column("n")
        series = {"core increment": result.trace.column("delta_sup_core")}
        if reference is not None:
            series["weighted H1 error"] = result.trace.column("weighted_err")
        _plot_series(outdir, "convergence.svg", ns, series, "iteration", "error")
    print(f"run: converged={result.converged} iters={result.iters} -> {outdir}")
    return 0 if result.converged else 2


def _sweep_rho_row(payload):
    cfg, rho = payload
    cfg = json.loads(cfg)
    cfg["problem"]["rho"] = rho
    problem, disc = _build(cfg)
    from .analysis import rho_scaling_row

    return rho_scaling_row(problem, disc, alpha=float(cfg["analysis"]["alpha"]))


def _sweep_eps_row(payload):
    cfg, eps0 = payload
    cfg = json.loads(cfg)
    cfg["problem"].setdefault("params", {})["eps0"] = eps0
    problem, disc = _build(cfg)
    baseline = None
    if eps0 > 0:
        base_cfg = json.loads(json.dumps(cfg))
        base_cfg["problem"]["params"]["eps0"] = 0.0
        baseline, _ = _build(base_cfg)
    from .analysis import epsilon_floor_row

    row = epsilon_floor_row(
        problem,
        disc,
        reference_problem=baseline,
        max_iters=int(cfg["pia"]["max_iters"]),
    )
    return {"eps0": eps0, **row}


def cmd_sweep(args):
    cfg = load_config(args.config)
    kind = args.sweep
    values = (
        cfg["analysis"]["rho_list"] if kind == "rho" else cfg["analysis"]["eps0_list"]
    )
    if not values:
        raise ConfigError(f"empty {kind} sweep list in config")
    outdir = _prepare_outdir(cfg, args.out)
    worker = _sweep_rho_row if kind == "rho" else _sweep_eps_row
    payloads = [(json.dumps(cfg), v) for v in values]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(worker, payloads))
    else:
        rows = [worker(p) for p in payloads]

    table_path = outdir / f"sweep_{kind}.csv"
    with open(table_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    all_ok = all(row.get("converged", False) for row in rows)
    _write_summary(
        outdir,
        {"sweep": kind, "values": list(values), "rows": rows, "all_converged": all_ok},
    )
    if args.plots:
        if kind == "rho":
            labels = [
                "rho_sup_v",
                "rho_s_h0",
                "rho_s_h1",
                "rho_s_h2",
                "rho_s_d1",
                "rho_s_d2",
            ]
            series = {lab: [row[lab] for row in rows] for lab in labels}
            _plot_series(
                outdir,
                "rho_scaling.svg",
                values,
                series,
                "rho",
                "scaled quantity",
                logx=True,
                logy=True,
            )
        else:
            _plot_series(
                outdir,
                "eps0_floor.svg",
                values,
                {"floor": [row["floor"] for row in rows]},
                "eps0",
                "fitted floor",
                logx=True,
                logy=True,
            )
    print(f"sweep {kind}: {len(rows)} rows -> {table_path}")
    return 0 if all_ok else 2


def cmd_verify(args):
    report, discrepancy = run_verification_suite()
    for line in report.lines():
        print(line)
    payload = report.to_dict()
    payload["recursion_discrepancy"] = discrepancy
    payload["version"] = __version__
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "verify_report.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
    return 0 if report.ok() else 2


def _interp_at(field, pts):
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(field.grid.axes(), field.values)
    return interp(np.atleast_2d(pts))


def cmd_mc_check(args):
    cfg = load_config(args.config)
    mc_cfg = cfg["mc"]
    if int(mc_cfg["npaths"]) < 1000:
        raise ConfigError("mc.npaths must be at least 1000")
    problem, disc = _build(cfg)
    outdir = _prepare_outdir(cfg, args.out)
    _maybe_validate(problem, args.strict, box=list(disc.grid.box))

    # one policy update from v0 = 0, then evaluate that policy's value
    from .discretize import ScalarField

    zero = ScalarField(disc.grid, np.zeros(disc.grid.shape))
    state = pia_step(
        problem, disc, PiaState(n=0, v_prev=zero, policy=None, coeffs=None, v=zero)
    )
    v_pde = state.v
    coeffs = state.coeffs

    T = float(mc_cfg["T"]) or 20.0 / problem.rho
    dt = float(mc_cfg["dt"]) or T / 10_000
    scale = max(1.0, float(np.max(np.abs(v_pde.values))))
    h2 = max(h**2 for h in disc.grid.h)
    rows = []
    for x0 in mc_cfg["points"]:
        est = mc_value(
            problem,
            state.policy,
            x0,
            npaths=int(mc_cfg["npaths"]),
            dt=dt,
            T=T,
            seed=int(mc_cfg["seed"]),
            coeffs=coeffs,
        )
        pde_val = float(_interp_at(v_pde, x0)[0])
        allowance = 3 * est.stderr + float(mc_cfg["bias_constant"]) * scale * (
            h2 + dt
        ) + est.tail_bound
        diff = abs(pde_val - est.mean)
        rows.append(
            {
                "x0": est.x0,
                "pde": pde_val,
                "mc_mean": est.mean,
                "stderr": est.stderr,
                "diff": diff,
                "allowance": allowance,
                "exit_fraction": est.exit_fraction,
                "tail_bound": est.tail_bound,
                "valid": est.valid,
                "ok": bool(est.valid and diff <= allowance),
            }
        )
    for row in rows:
        print(
            f"x0={row['x0']}  pde={row['pde']:.6g}  mc={row['mc_mean']:.6g} "
            f"+- {row['stderr']:.2g}  diff={row['diff']:.3g} "
            f"allow={row['allowance']:.3g}  {'OK' if row['ok'] else 'MISMATCH'}"
        )
    _write_summary(
        outdir,
        {
            "mc_points": rows,
            "npaths": int(mc_cfg["npaths"]),
            "dt": dt,
            "T": T,
            "seed": int(mc_cfg["seed"]),
        },
    )
    return 0 if all(r["ok"] for r in rows) else 2


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="epia",
        description="Entropy-regularized policy iteration experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=False, help="TOML or JSON config file")
    common.add_argument("--out", default=None, help="output directory override")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--strict", action="store_true",
                        help="abort on assumption-check violations")
    common.add_argument("--plots", action="store_true", help="emit SVG plots")

    p_run = sub.add_parser("run", parents=[common], help="run policy iteration")
    p_run.set_defaults(func=cmd_run)
    p_sweep = sub.add_parser("sweep", parents=[common], help="parameter sweeps")
    p_sweep.add_argument("--sweep", choices=("rho", "eps0"), required=True)
    p_sweep.set_defaults(func=cmd_sweep)
    p_verify = sub.add_parser("verify", parents=[common],
                              help="closed-form verification suite")
    p_verify.set_defaults(func=cmd_verify)
    p_mc = sub.add_parser("mc-check", parents=[common],
                          help="Monte-Carlo cross-check of policy values")
    p_mc.set_defaults(func=cmd_mc_check)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    if args.command != "verify" and not args.config:
        print("error: --config is required", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, ProblemValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
