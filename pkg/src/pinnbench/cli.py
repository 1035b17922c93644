"""Command-line entry point.

    pinnbench train --config exp.cfg [--trials N] [--seed S] [--out DIR]
    pinnbench sweep --config-dir DIR [--out DIR]
    pinnbench oracle --problem burgers|pb-linear --out FILE
    pinnbench eval --params FILE --problem NAME

Config files are flat ``key = value`` text with ``#`` comments; see
``harness.parse_config`` for the schema.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from dataclasses import replace

import numpy as np


def _cmd_train(args):
    from .harness import parse_config, run_sweep

    cfg = parse_config(args.config)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = args.out or os.path.join("runs", cfg.name)
    result = run_sweep(cfg, out_dir=out)
    print(f"{cfg.name}: final test MSE {result.final_mean!r} "
          f"+- {result.final_std!r} ({result.diverged}/{cfg.trials} diverged)")
    print(f"wrote {out}/records.csv, curve.csv, summary.csv")
    return 0


def _cmd_sweep(args):
    from .harness import parse_config, run_sweep, write_summary

    paths = sorted(glob.glob(os.path.join(args.config_dir, "*.cfg")))
    if not paths:
        print(f"no .cfg files in {args.config_dir}", file=sys.stderr)
        return 1
    out_root = args.out or "runs"
    results = []
    for path in paths:
        cfg = parse_config(path)
        result = run_sweep(cfg, out_dir=os.path.join(out_root, cfg.name))
        results.append(result)
        print(f"{cfg.name}: final test MSE {result.final_mean!r} "
              f"+- {result.final_std!r} ({result.diverged} diverged)")
    write_summary(results, os.path.join(out_root, "summary.csv"))
    print(f"wrote {out_root}/summary.csv")
    return 0


def _cmd_oracle(args):
    from .oracle import solve_burgers, solve_pb_linear_radial
    from .problems import PbGeometry

    if args.problem == "burgers":
        grid = solve_burgers()
    elif args.problem == "pb-linear":
        grid = solve_pb_linear_radial(PbGeometry.single_charge_sphere())
    else:
        print(f"no oracle for {args.problem!r}", file=sys.stderr)
        return 1
    grid.to_csv(args.out)
    print(f"wrote {args.out} ({'x'.join(str(len(a)) for a in grid.axes)} grid)")
    return 0


def _cmd_eval(args):
    from .network import load_params
    from .oracle import test_mse
    from .problems import get_problem

    spec, params = load_params(args.params)
    problem = get_problem(args.problem)
    probes = problem.test_probes()
    mse = test_mse(lambda p: problem.predict(spec, params, p),
                   problem.reference(), probes)
    print(f"test MSE: {mse!r} over {len(np.atleast_1d(probes))} probes")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pinnbench",
                                description="PINN scalarization benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one experiment config")
    t.add_argument("--config", required=True)
    t.add_argument("--trials", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(fn=_cmd_train)

    s = sub.add_parser("sweep", help="run every .cfg in a directory")
    s.add_argument("--config-dir", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_sweep)

    o = sub.add_parser("oracle", help="write a reference grid to CSV")
    o.add_argument("--problem", required=True, choices=["burgers", "pb-linear"])
    o.add_argument("--out", required=True)
    o.set_defaults(fn=_cmd_oracle)

    e = sub.add_parser("eval", help="score saved parameters against the reference")
    e.add_argument("--params", required=True)
    e.add_argument("--problem", required=True)
    e.set_defaults(fn=_cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
