"""Command-line entry point: ``srot {plan,divergence,flow,color-transfer,bench}``.

Every flag can also be given in a JSON file passed with ``--config`` (keys are
the flag names without dashes, e.g. ``"out_dir"``). Flags on the command line
override the file. Exit codes: 0 success, 2 bad input, 3 solver failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .core import (DimensionMismatchError, DiscreteMeasure, cost_matrix, independent_coupling, l1_error,
                   marginal_violation, plan_cost, read_matrix_csv, read_measure, write_plan)
from .exact import ExactSolverError, solve_exact
from .sinkhorn import SinkhornError, SolverConfig, solve_with_reference, write_trace
from .sliced import AGGREGATIONS, SlicedConfig, sot_plan

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("srot")


class InputError(ValueError):
    pass


class SolverFailure(RuntimeError):
    pass


DEFAULTS = {
    "common": {"out_dir": "out", "seed": 0, "eps": 0.01, "T": 5000, "tol": 1e-9, "domain": "auto",
               "L": 100, "aggregation": "uniform", "temperature": 0.1, "gamma": 1e-8, "strict": False},
    "plan": {"method": "srot", "dataset": "half_moons", "n": 240, "source": None, "target": None,
             "cost": None, "trace": False},
    "divergence": {"kind": "srot", "dataset": "half_moons", "n": 240, "source": None, "target": None},
    "flow": {"kind": "srot", "n": 50, "steps": 100, "eta": 0.05, "stride": 10, "distance": 3.0,
             "blob_std": 0.5, "snapshots": False, "eps": 0.5},
    "color-transfer": {"source": None, "target": None, "method": "srot", "K": 256, "output": "recolored.ppm"},
    "bench": {"figure": "eps", "datasets": list(bench.DATASETS), "seeds": [0], "n": 240,
              "methods": list(bench.METHODS), "formats": ["csv", "svg"], "epsilons": None,
              "iterations": None, "projections": None, "aggregations": None},
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with flag values")
    p.add_argument("--dump-config", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, help="entropic regularization")
    p.add_argument("--T", type=int, help="maximum Sinkhorn iterations")
    p.add_argument("--tol", type=float, help="marginal violation tolerance")
    p.add_argument("--domain", choices=("auto", "scaling", "log"))
    p.add_argument("--L", type=int, help="number of projections")
    p.add_argument("--aggregation", choices=AGGREGATIONS)
    p.add_argument("--temperature", type=float, help="softmin temperature")
    p.add_argument("--gamma", type=float, help="reference smoothing")
    p.add_argument("--strict", action="store_true", help="treat Sinkhorn non-convergence as failure (exit 3)")


def _pair_inputs(p):
    p.add_argument("--dataset", choices=bench.DATASETS)
    p.add_argument("--n", type=int)
    p.add_argument("--source", help="source measure file (overrides --dataset)")
    p.add_argument("--target", help="target measure file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srot", description="Sliced-regularized optimal transport toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compute a transport plan", argument_default=argparse.SUPPRESS)
    _common(p)
    _pair_inputs(p)
    p.add_argument("--method", choices=("exact", "sot", "eot", "srot", "independent"))
    p.add_argument("--cost", help="cost matrix CSV (weights uniform unless measures are given)")
    p.add_argument("--trace", action="store_true", help="write per-iteration Sinkhorn trace")

    p = sub.add_parser("divergence", help="debiased divergence between two measures",
                       argument_default=argparse.SUPPRESS)
    _common(p)
    _pair_inputs(p)
    p.add_argument("--kind", choices=("srot", "sinkhorn"))

    p = sub.add_parser("flow", help="gradient flow between two Gaussian blobs", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--kind", choices=("srot", "sinkhorn", "exact"))
    p.add_argument("--n", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--eta", type=float, help="Euler step size")
    p.add_argument("--stride", type=int, help="steps between Wasserstein evaluations")
    p.add_argument("--distance", type=float, help="distance between blob centres")
    p.add_argument("--blob-std", dest="blob_std", type=float)
    p.add_argument("--snapshots", action="store_true", help="write every point-set snapshot")

    p = sub.add_parser("color-transfer", help="palette color transfer", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--source", help="source image (PPM or PNG)")
    p.add_argument("--target", help="target image (PPM or PNG)")
    p.add_argument("--method", choices=("sot", "eot", "srot", "exact"))
    p.add_argument("--K", type=int, help="palette size")
    p.add_argument("--output", help="output image name inside --out-dir (.ppm or .png)")

    p = sub.add_parser("bench", help="ablation sweeps", argument_default=argparse.SUPPRESS)
    _common(p)
    p.add_argument("--figure", choices=("eps", "iter", "proj", "timing"))
    p.add_argument("--datasets", nargs="+", choices=bench.DATASETS)
    p.add_argument("--seeds", nargs="+", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--methods", nargs="+", choices=bench.METHODS)
    p.add_argument("--formats", nargs="+", choices=("csv", "svg"))
    p.add_argument("--epsilons", nargs="+", type=float)
    p.add_argument("--iterations", nargs="+", type=int)
    p.add_argument("--projections", nargs="+", type=int)
    p.add_argument("--aggregations", nargs="+", choices=AGGREGATIONS)
    return parser


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _coerce(action, value):
    """Validate a config-file value with the same type and choices as its flag."""
    if value is None:
        return None
    if action.nargs == "+":
        if not isinstance(value, list):
            value = [value]
        items = [action.type(v) if action.type else v for v in value]
        bad = [v for v in items if action.choices and v not in action.choices]
    else:
        if isinstance(action, argparse._StoreTrueAction):
            if not isinstance(value, bool):
                raise InputError(f"config key {action.dest!r} must be true or false")
            return value
        items = action.type(value) if action.type else value
        bad = [items] if action.choices and items not in action.choices else []
    if bad:
        raise InputError(f"config key {action.dest!r}: invalid choice {bad[0]!r}")
    return items


def resolve(parser, args: argparse.Namespace) -> dict:
    """Merge defaults, the optional JSON file and explicit flags (in that order)."""
    command = args.command
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config", "dump_config")}
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[command])
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config", "dump_config", "verbose")}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise InputError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        if data.pop("command", command) != command:
            raise InputError(f"config file is for another subcommand, not {command!r}")
        unknown = sorted(set(data) - set(actions))
        if unknown:
            raise InputError(f"unknown config keys for {command!r}: {', '.join(unknown)}")
        for key, value in data.items():
            cfg[key] = _coerce(actions[key], value)
    cfg.update(given)
    cfg["command"] = command
    return cfg


def solver_config(cfg) -> SolverConfig:
    return SolverConfig(epsilon=cfg["eps"], max_iter=cfg["T"], tol=cfg["tol"], domain=cfg["domain"])


def sliced_config(cfg) -> SlicedConfig:
    return SlicedConfig(cfg["L"], cfg["aggregation"], cfg["temperature"], cfg["gamma"], cfg["seed"])


def _require_files(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")


def _load_pair(cfg):
    if cfg.get("source") or cfg.get("target"):
        if not (cfg.get("source") and cfg.get("target")):
            raise InputError("--source and --target must be given together")
        return read_measure(cfg["source"]), read_measure(cfg["target"])
    return bench.generate(cfg["dataset"], cfg["n"], cfg["seed"])


def _check_converged(cfg, duals, what="Sinkhorn"):
    if duals is not None and not duals.converged:
        msg = (f"{what} stopped after {duals.iterations} iterations with marginal violation "
               f"{duals.violation:.3g} > tol {cfg['tol']:.3g}")
        if cfg["strict"]:
            raise SolverFailure(msg)
        log.warning(msg)


def cmd_plan(cfg) -> str:
    _require_files(cfg.get("source"), cfg.get("target"), cfg.get("cost"))
    method = cfg["method"]
    if cfg.get("cost"):
        C = read_matrix_csv(cfg["cost"])
        if cfg.get("source"):
            mu, nu = _load_pair(cfg)
            if C.shape != (mu.n, nu.n):
                raise DimensionMismatchError(f"cost shape {C.shape} vs measures ({mu.n}, {nu.n})")
        else:
            if method in ("sot", "srot"):
                raise InputError(f"method {method!r} needs atom positions; pass --source/--target")
            n, m = C.shape
            mu = DiscreteMeasure(np.zeros((n, 1)), np.full(n, 1.0 / n))
            nu = DiscreteMeasure(np.zeros((m, 1)), np.full(m, 1.0 / m))
    else:
        mu, nu = _load_pair(cfg)
        C = cost_matrix(mu, nu)
    solver, sliced = solver_config(cfg), sliced_config(cfg)
    duals = None
    t0 = time.perf_counter()
    if method == "exact":
        plan = solve_exact(C, mu, nu).plan
    elif method == "independent":
        plan = independent_coupling(mu, nu)
    elif method == "sot":
        plan = sot_plan(mu, nu, C, sliced)
    else:
        ref = independent_coupling(mu, nu) if method == "eot" else sot_plan(mu, nu, C, sliced)
        solver = SolverConfig(solver.epsilon, solver.max_iter, solver.tol, solver.domain, trace=cfg["trace"])
        plan, duals = solve_with_reference(mu, nu, C, ref, solver)
    runtime = 1e3 * (time.perf_counter() - t0)
    _check_converged(cfg, duals)
    summary = f"plan method={method}"
    if method in ("eot", "srot"):
        summary += f" eps={cfg['eps']:g}"
    if method == "exact":
        summary += f" cost={plan_cost(C, plan):.10g}"
    else:
        exact = solve_exact(C, mu, nu).plan
        summary += f" l1_vs_exact={l1_error(plan, exact):.6g}"
    summary += f" violation={marginal_violation(plan):.3g} runtime_ms={runtime:.1f}"
    out = _out_dir(cfg)
    write_plan(plan, out / "plan.csv")
    if duals is not None and cfg["trace"]:
        write_trace(duals, out / "trace.csv")
    return summary


def cmd_divergence(cfg) -> str:
    from .divergence import divergence

    _require_files(cfg.get("source"), cfg.get("target"))
    mu, nu = _load_pair(cfg)
    t0 = time.perf_counter()
    res = divergence(cfg["kind"], mu, nu, solver_config(cfg), sliced_config(cfg))
    runtime = 1e3 * (time.perf_counter() - t0)
    if not res.converged:
        msg = f"divergence terms did not all reach tol {min(cfg['tol'], 1e-10):.3g}"
        if cfg["strict"]:
            raise SolverFailure(msg)
        log.warning(msg)
    out = _out_dir(cfg)
    payload = {"kind": cfg["kind"], "epsilon": cfg["eps"], "value": res.value, "cross": res.cross,
               "self_source": res.self_source, "self_target": res.self_target, "converged": res.converged}
    (out / "divergence.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return f"divergence kind={cfg['kind']} eps={cfg['eps']:g} value={res.value:.10g} runtime_ms={runtime:.1f}"


def cmd_flow(cfg) -> str:
    from .flow import FlowConfig, gaussian_blobs, run_flow, write_trajectory

    source, target = gaussian_blobs(cfg["n"], cfg["seed"], cfg["distance"], cfg["blob_std"])
    fc = FlowConfig(step_size=cfg["eta"], steps=cfg["steps"], divergence=cfg["kind"], solver=solver_config(cfg),
                    sliced=sliced_config(cfg), stride=cfg["stride"])
    t0 = time.perf_counter()
    traj = run_flow(source, target, fc)
    runtime = 1e3 * (time.perf_counter() - t0)
    if traj.unconverged_solves:
        msg = f"{traj.unconverged_solves} flow steps used unconverged inner solves"
        if cfg["strict"]:
            raise SolverFailure(msg)
        log.warning(msg)
    write_trajectory(traj, _out_dir(cfg), snapshots=cfg["snapshots"])
    status = " aborted=true" if traj.aborted else ""
    return (f"flow kind={cfg['kind']} eps={cfg['eps']:g} w_initial={traj.wasserstein[0]:.6g} "
            f"w_final={traj.wasserstein[-1]:.6g}{status} runtime_ms={runtime:.1f}")


def cmd_color_transfer(cfg) -> str:
    from . import colortransfer as ct

    if not cfg.get("source") or not cfg.get("target"):
        raise InputError("color-transfer needs --source and --target images")
    _require_files(cfg["source"], cfg["target"])
    if Path(cfg["output"]).suffix.lower() not in (".ppm", ".pnm", ".png"):
        raise InputError("--output must end in .ppm or .png")
    src = ct.read_image(cfg["source"])
    tgt = ct.read_image(cfg["target"])
    res = ct.run_color_transfer(src, tgt, cfg["method"], solver_config(cfg), sliced_config(cfg), cfg["K"])
    if not res.converged:
        msg = "Sinkhorn did not converge for the palette plan"
        if cfg["strict"]:
            raise SolverFailure(msg)
        log.warning(msg)
    out = _out_dir(cfg)
    ct.write_image(res.image, out / cfg["output"])
    pair = f"{Path(cfg['source']).stem}->{Path(cfg['target']).stem}"
    ct.write_diagnostics([(pair, res)], out / "diagnostics.csv")
    return (f"color-transfer method={cfg['method']} eps={cfg['eps']:g} l1_vs_exact={res.l1_vs_exact:.6g} "
            f"runtime_ms={res.runtime_ms:.1f}")


def cmd_bench(cfg) -> str:
    out = Path(cfg["out_dir"])
    t0 = time.perf_counter()
    figure = cfg["figure"]
    if figure == "timing":
        rows = []
        for ds in cfg["datasets"]:
            for seed in cfg["seeds"]:
                row = bench.timing_study(ds, cfg["n"], seed, cfg["L"], cfg["eps"], cfg["T"], tol=cfg["tol"])
                rows.append({"dataset": ds, "seed": seed, **row})
        out.mkdir(parents=True, exist_ok=True)
        with (out / "timing.csv").open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        frac = max(r["fraction"] for r in rows)
        return f"bench figure=timing cells={len(rows)} max_sot_fraction={frac:.4f}"
    grids = {"eps": ("epsilon", bench.EPS_GRID), "iter": ("iterations", bench.ITER_GRID),
             "proj": ("projections", bench.PROJ_GRID)}
    x_axis, grid = grids[figure]
    axes = bench.SweepAxes(
        epsilons=tuple(cfg["epsilons"] or (grid if figure == "eps" else (cfg["eps"],))),
        iterations=tuple(cfg["iterations"] or (grid if figure == "iter" else (cfg["T"],))),
        projections=tuple(cfg["projections"] or (grid if figure == "proj" else (cfg["L"],))),
        aggregations=tuple(cfg["aggregations"] or (cfg["aggregation"],)),
        tol=cfg["tol"], gamma=cfg["gamma"], temperature=cfg["temperature"])
    records = bench.sweep(axes, tuple(cfg["datasets"]), tuple(cfg["methods"]), tuple(cfg["seeds"]), cfg["n"])
    bench.emit(records, out, tuple(cfg["formats"]), figure=f"fig_{figure}", x_axis=x_axis)
    failed = sum(1 for r in records if r.error)
    return (f"bench figure={figure} cells={len(records)} failed={failed} "
            f"runtime_ms={1e3 * (time.perf_counter() - t0):.1f}")


COMMANDS = {"plan": cmd_plan, "divergence": cmd_divergence, "flow": cmd_flow,
            "color-transfer": cmd_color_transfer, "bench": cmd_bench}


def _out_dir(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with status 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(parser, args)
        if getattr(args, "dump_config", False):
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return EXIT_OK
        summary = COMMANDS[args.command](cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverFailure, ExactSolverError, SinkhornError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
