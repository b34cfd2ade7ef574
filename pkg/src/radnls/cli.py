"""Command-line front end: solve commands, studies and reproducible output.

Subcommands: ``shoot``, ``nehari``, ``combined`` and ``study``.  Options
come from a declarative YAML config (nested blocks ``problem``, ``method``,
``study``, ``output``) with command-line flags taking precedence.  Data
files are CSV with one header line and 17-significant-digit decimals, so a
re-run of the same config is byte identical and every value round-trips;
scalars and summaries go to JSON.  Exit codes: 0 success, 1 usage error,
2 solver or validation error (with a machine-readable error JSON).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import (
    amplitude_sweep,
    combined_state,
    convergence_study,
    cross_method_gap,
    extrema_profile,
    fit_amplitudes,
    fit_node_positions,
    nehari_state,
    sech_tail_compare,
    shooting_state,
    trajectory_node_radii,
)
from .core import SolverParams
from .nehari import MaxIterExceededError, NodeCountChangedError

__all__ = ["main"]

_DEFAULT_METHOD = {
    "nodes": 0,
    "eps": 1.0e-10,
    "tau": None,
    "max_iter": 50_000_000,
    "bisect_eps": 1.0e-12,
    "rk_step": None,
    "r_max": None,
    "b0": 10.0,
    "init": "combined",
}


class _Parser(argparse.ArgumentParser):
    # spec'd exit codes: usage errors are 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json(path: Path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise ValueError(f"config root must be a mapping, got {type(cfg).__name__}")
    return cfg


def _build_params(cfg, args) -> SolverParams:
    problem = dict(cfg.get("problem") or {})
    for key in ("d", "omega", "p", "R", "N"):
        flag = getattr(args, key, None)
        if flag is not None:
            problem[key] = flag
    missing = [k for k in ("d", "omega", "p", "R", "N") if k not in problem]
    if missing:
        raise ValueError(f"missing problem parameters: {', '.join(missing)}")
    return SolverParams(
        d=int(problem["d"]),
        omega=float(problem["omega"]),
        p=float(problem["p"]),
        R=float(problem["R"]),
        N=int(problem["N"]),
    )


def _build_method(cfg, args) -> dict:
    method = dict(_DEFAULT_METHOD)
    method.update(cfg.get("method") or {})
    for key, flag in (
        ("nodes", "nodes"),
        ("eps", "eps"),
        ("tau", "tau"),
        ("rk_step", "rk_step"),
        ("max_iter", "max_iter"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            method[key] = value
    return method


def _out_dir(cfg, args) -> Path:
    out = args.out or (cfg.get("output") or {}).get("directory") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _manifest(out: Path, command: str, params: SolverParams, method: dict, extra=None):
    payload = {
        "command": command,
        "version": __version__,
        "problem": {"d": params.d, "omega": params.omega, "p": params.p,
                    "R": params.R, "N": params.N},
        "method": {k: method[k] for k in sorted(method)},
    }
    if extra:
        payload.update(extra)
    _write_json(out / "manifest.json", payload)


def _shoot_files(out: Path, params: SolverParams, method: dict):
    state, outcome = shooting_state(
        params,
        int(method["nodes"]),
        rk_step=method["rk_step"],
        bisect_eps=float(method["bisect_eps"]),
        b0=float(method["b0"]),
        r_max=method["r_max"],
    )
    traj = outcome.trajectory
    grid = params.grid()
    du = np.interp(grid.r, traj.r, traj.du)
    _write_csv(out / "solution.csv", ["r", "u", "du"],
               zip(grid.r, state.values, du))
    _write_json(out / "summary.json", {
        "alpha": outcome.alpha,
        "node_count": outcome.node_count,
        "iterations": outcome.iterations,
        "expansions": outcome.expansions,
        "bracket_history": [list(row) for row in outcome.bracket_history],
    })
    return state, outcome


def _nehari_files(out: Path, params: SolverParams, method: dict):
    run = nehari_state(
        params,
        int(method["nodes"]),
        init=method["init"],
        tau=method["tau"],
        epsilon=float(method["eps"]),
        max_iter=int(method["max_iter"]),
        rk_step=method["rk_step"],
        bisect_eps=float(method["bisect_eps"]),
        b0=float(method["b0"]),
        r_max=method["r_max"],
    )
    grid = params.grid()
    with np.errstate(divide="ignore"):
        log10u = np.log10(np.abs(run.final.values))
    _write_csv(out / "solution.csv", ["r", "u", "log10_abs_u"],
               zip(grid.r, run.final.values, log10u))
    n_hist = run.crit_history.size
    _write_csv(
        out / "history.csv",
        ["iter", "crit", "action", "max_residual"],
        zip(range(1, n_hist + 1), run.crit_history,
            run.action_history[1:], run.residual_history),
    )
    _write_json(out / "summary.json", {
        "iterations": run.iterations,
        "converged": run.converged,
        "n_nodes": run.n_nodes,
        "final_action": float(run.action_history[-1]),
        "final_crit": float(run.crit_history[-1]) if n_hist else None,
        "tau_final": run.tau_final,
    })
    return run


def cmd_shoot(cfg, args) -> int:
    params = _build_params(cfg, args)
    method = _build_method(cfg, args)
    out = _out_dir(cfg, args)
    _manifest(out, "shoot", params, method)
    _shoot_files(out, params, method)
    return 0


def cmd_nehari(cfg, args) -> int:
    params = _build_params(cfg, args)
    method = _build_method(cfg, args)
    out = _out_dir(cfg, args)
    _manifest(out, "nehari", params, method)
    _nehari_files(out, params, method)
    return 0


def cmd_combined(cfg, args) -> int:
    params = _build_params(cfg, args)
    method = _build_method(cfg, args)
    out = _out_dir(cfg, args)
    _manifest(out, "combined", params, method)
    outcome, run = combined_state(
        params,
        int(method["nodes"]),
        tau=method["tau"],
        epsilon=float(method["eps"]),
        max_iter=int(method["max_iter"]),
        rk_step=method["rk_step"],
        bisect_eps=float(method["bisect_eps"]),
        b0=float(method["b0"]),
        r_max=method["r_max"],
    )
    _write_json(out / "shooting_summary.json", {
        "alpha": outcome.alpha,
        "node_count": outcome.node_count,
        "iterations": outcome.iterations,
    })
    grid = params.grid()
    with np.errstate(divide="ignore"):
        log10u = np.log10(np.abs(run.final.values))
    _write_csv(out / "solution.csv", ["r", "u", "log10_abs_u"],
               zip(grid.r, run.final.values, log10u))
    n_hist = run.crit_history.size
    _write_csv(out / "history.csv", ["iter", "crit", "action", "max_residual"],
               zip(range(1, n_hist + 1), run.crit_history,
                   run.action_history[1:], run.residual_history))
    _write_json(out / "summary.json", {
        "iterations": run.iterations,
        "converged": run.converged,
        "n_nodes": run.n_nodes,
        "final_action": float(run.action_history[-1]),
        "alpha": outcome.alpha,
    })
    return 0


def cmd_study(cfg, args) -> int:
    params = _build_params(cfg, args)
    method = _build_method(cfg, args)
    study = cfg.get("study") or {}
    if not study:
        raise ValueError("no study requested")
    out = _out_dir(cfg, args)
    workers = args.workers or int(cfg.get("workers") or 0) or (os.cpu_count() or 1)
    _manifest(out, "study", params, method, {"study": study, "workers": workers})
    fits: dict = {}

    block = study.get("convergence")
    if block:
        methods = block.get("method", "both")
        methods = ["shooting", "nehari"] if methods == "both" else [methods]
        slopes: dict = {}
        for name in methods:
            for nodes in block.get("nodes", [int(method["nodes"])]):
                report = convergence_study(
                    name, params, block["N_list"], int(block["N_ref"]),
                    int(nodes), workers=workers,
                )
                _write_csv(
                    out / f"convergence_{name}_nodes{nodes}.csv",
                    ["N", "h", "e1", "einf"],
                    zip(report.Ns, report.hs, report.e1, report.einf),
                )
                slopes[f"{name}_nodes{nodes}"] = {
                    "e1": report.slope_e1, "einf": report.slope_einf,
                }
        fits["convergence_slopes"] = slopes

    block = study.get("gaps")
    if block:
        for nodes in block.get("nodes", [int(method["nodes"])]):
            rows = cross_method_gap(params, block["N_list"], int(nodes),
                                    workers=workers)
            _write_csv(out / f"gaps_nodes{nodes}.csv", ["N", "E1", "Einf"], rows)

    block = study.get("amplitude_fit")
    if block:
        k_max = int(block.get("k_max", 60))
        outcomes = amplitude_sweep(
            params, k_max,
            r_max=float(block.get("r_max", 8.0 * params.R)),
            rk_step=float(block.get("rk_step", 1.0e-3)),
            bisect_eps=float(block.get("bisect_eps", method["bisect_eps"])),
        )
        alphas = [o.alpha for o in outcomes]
        fit = fit_amplitudes(alphas)
        ks = np.arange(k_max + 1)
        _write_csv(out / "amplitudes.csv", ["k", "alpha", "fitted"],
                   zip(ks, alphas, fit.a + fit.b * np.sqrt(ks)))
        fits["amplitude_fit"] = {
            "a": fit.a, "b": fit.b, "rss": fit.rss,
            "conf_a": list(fit.bounds_a), "conf_b": list(fit.bounds_b),
        }

    block = study.get("node_positions")
    if block:
        k_max = int(block.get("k_max", 8))
        outcomes = amplitude_sweep(
            params, k_max,
            r_max=float(block.get("r_max", 4.0 * params.R)),
            rk_step=float(block.get("rk_step", 1.0e-3)),
            bisect_eps=float(block.get("bisect_eps", method["bisect_eps"])),
        )
        table = {}
        rows = []
        for k, outcome in enumerate(outcomes):
            radii = trajectory_node_radii(outcome.trajectory)[:k]
            table[k] = radii
            rows.extend((k, j + 1, rho) for j, rho in enumerate(radii))
        _write_csv(out / "node_positions.csv", ["k", "node_index", "position"], rows)
        per_index = fit_node_positions(table, min_states=int(block.get("min_states", 5)))
        _write_csv(
            out / "node_position_fits.csv",
            ["node_index", "a", "b", "conf_a", "conf_b"],
            [(j, f.a, f.b, f.conf_a, f.conf_b) for j, f in per_index.items()],
        )
        fits["node_position_fits"] = {
            str(j): {"a": f.a, "b": f.b} for j, f in per_index.items()
        }

    block = study.get("extrema") or study.get("sech_tail")
    if block:
        nodes = int(block.get("nodes", method["nodes"]))
        _, run = combined_state(
            params, nodes,
            epsilon=float(method["eps"]),
            max_iter=int(method["max_iter"]),
            bisect_eps=float(method["bisect_eps"]),
            r_max=method["r_max"],
        )
        if study.get("extrema"):
            profile = extrema_profile(run.final)
            _write_csv(out / "extrema.csv", ["component", "position", "value"],
                       [(i, pos, val) for i, (pos, val) in enumerate(profile)])
        if study.get("sech_tail"):
            gap, shift = sech_tail_compare(run.final)
            fits["sech_tail"] = {"gap": gap, "shift": shift, "nodes": nodes}

    _write_json(out / "fits.json", fits)
    return 0


def _make_parser() -> _Parser:
    parser = _Parser(prog="radnls",
                     description="Radial NLS bound states: shooting and "
                                 "Nehari projected descent.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("shoot", cmd_shoot), ("nehari", cmd_nehari),
                     ("combined", cmd_combined), ("study", cmd_study)):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--d", type=int, default=None)
        sp.add_argument("--omega", type=float, default=None)
        sp.add_argument("--p", type=float, default=None)
        sp.add_argument("--R", type=float, default=None)
        sp.add_argument("--N", type=int, default=None)
        sp.add_argument("--nodes", type=int, default=None)
        sp.add_argument("--eps", type=float, default=None)
        sp.add_argument("--tau", type=float, default=None)
        sp.add_argument("--rk-step", dest="rk_step", type=float, default=None)
        sp.add_argument("--max-iter", dest="max_iter", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = _make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.fn(cfg, args)
    except (ValueError, NodeCountChangedError, MaxIterExceededError,
            RuntimeError) as exc:
        error = {
            "error": type(exc).__name__.removesuffix("Error"),
            "message": str(exc),
        }
        try:
            out = Path(args.out or "out")
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "error.json", error)
        except OSError:
            pass
        print(f"radnls: error: {error['message']}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
