"""Command-line surface for the benchmark suite.

Subcommands:

* run         -- full iterative scheme from a JSON config
* example     -- same, for a built-in benchmark (or the horizon sweep)
* verify-cert -- sampled falsification of a stored certificate
* rollout     -- cost of the initial controller alone
"""

from __future__ import annotations

import argparse
import csv
import shutil
import sys
from pathlib import Path

import numpy as np

from . import examples
from .closed_loop import NotReached, trajectory_cost
from .config import ConfigError, load_config
from .gbf import GuidanceBarrier, verify_certificate
from .loop import run as run_loop


def _add_common(p):
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None,
                   help="override the iteration budget K")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rampc",
                                 description="reach-avoid MPC benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full scheme from a config file")
    p.add_argument("--config", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("example", help="run a built-in benchmark")
    p.add_argument("name", choices=sorted(examples.BUILTIN) + ["ex2-sweepN"])
    _add_common(p)

    p = sub.add_parser("verify-cert", help="sample-check a certificate file")
    p.add_argument("--cert", type=Path, required=True)
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-6)

    p = sub.add_parser("rollout", help="cost of the initial controller alone")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--example", dest="example_name", default=None,
                   choices=sorted(examples.BUILTIN))
    p.add_argument("--controller", default="init", choices=["init"])
    p.add_argument("--out", type=Path, default=None)
    return ap


def _get_config(args):
    if getattr(args, "config", None) is not None:
        return load_config(args.config)
    if getattr(args, "example_name", None) is not None:
        return examples.get(args.example_name)
    raise ConfigError("provide --config or --example")


def _report_run(result, quiet=False):
    if not quiet:
        print("  j        cost   len   delta*")
        for r in result.reports:
            ds = "" if r.delta_star is None else f"{r.delta_star:10.4f}"
            print(f"{r.j:3d}  {r.cost:10.4f}  {r.episode_len:4d}  {ds}")
    if result.failure:
        print(f"FAILURE: {result.failure}", file=sys.stderr)
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_loop(cfg, out_dir=args.out, seed=args.seed,
                      max_iters=args.max_iters)
    return _report_run(result)


def cmd_example(args) -> int:
    if args.name == "ex2-sweepN":
        return _run_sweep(args)
    cfg = examples.get(args.name)
    result = run_loop(cfg, out_dir=args.out, seed=args.seed,
                      max_iters=args.max_iters)
    return _report_run(result)


def _run_sweep(args) -> int:
    out = args.out
    rc = 0
    for N in examples.sweep_horizons():
        cfg = examples.sweep_config(N)
        sub_out = None if out is None else out / f"N{N}"
        print(f"=== horizon N = {N} ===")
        result = run_loop(cfg, out_dir=sub_out, seed=args.seed,
                          max_iters=args.max_iters)
        rc = max(rc, _report_run(result))
        if out is not None and sub_out is not None:
            shutil.copyfile(sub_out / "iterations.csv",
                            out / f"iterations_N{N}.csv")
    return rc


def cmd_verify_cert(args) -> int:
    cfg = load_config(args.config)
    barrier = GuidanceBarrier.load(args.cert)
    controller = barrier.controller or cfg.initial_controller
    closed = cfg.system.closed_loop_polys(controller)
    rng = np.random.default_rng(args.seed)
    rep = verify_certificate(barrier, closed, cfg.regions, args.samples, rng,
                             x0=cfg.x0)
    print(f"decrease       : {rep.decrease: .3e}")
    print(f"outside-safe   : {rep.outside: .3e}")
    print(f"target-bound   : {rep.target_bound: .3e}")
    print(f"v(x0)          : {rep.v_at_x0: .3e}")
    ok = rep.worst() >= -args.tol and rep.x0_ok()
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_rollout(args) -> int:
    cfg = _get_config(args)
    try:
        traj = cfg.initial_trajectory()
    except NotReached as exc:
        print(f"initial controller failed: {exc}", file=sys.stderr)
        return 1
    cost = trajectory_cost(traj, cfg.stage_cost)
    print(f"J0 = {cost:.4f}  (episode length {len(traj)})")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        from .loop import _dump_trajectory
        _dump_trajectory(args.out, 0, traj, cfg.stage_cost)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "example":
            return cmd_example(args)
        if args.command == "verify-cert":
            return cmd_verify_cert(args)
        if args.command == "rollout":
            return cmd_rollout(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
