"""Command-line entry points: run experiments, escape estimates, plots."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness


def _add_run_parser(sub) -> None:
    p = sub.add_parser("run", help="run a method x seed grid on one benchmark")
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--function", help="benchmark name, e.g. branin2d")
    p.add_argument("--method", help="comma-separated method tags (snake, EI, EIpu, ...)")
    p.add_argument("--budget", type=int)
    p.add_argument("--delay", type=int)
    p.add_argument("--epsilon", help="deletion constant or 'adaptive'")
    p.add_argument("--cost", choices=["euclidean", "response"])
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of consecutive seeds")
    p.add_argument("--noise-std", dest="noise_std", type=float)
    p.add_argument("--out")


def _add_escape_parser(sub) -> None:
    p = sub.add_parser("escape", help="non-escape probability experiment")
    p.add_argument("--mode", choices=["stationary", "no-stationary"], required=True)
    p.add_argument("--points", type=int, default=15, help="training points inside the region")
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="escape")


def _add_plot_parser(sub) -> None:
    p = sub.add_parser("plot", help="render SVG curves from emitted CSVs")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="snakebo",
                                     description="cost-aware Bayesian optimization benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_parser(sub)
    _add_escape_parser(sub)
    _add_plot_parser(sub)
    args = parser.parse_args(argv)

    if args.command == "run":
        overrides = {k: getattr(args, k) for k in
                     ("function", "method", "budget", "delay", "epsilon",
                      "cost", "seed", "seeds", "noise_std", "out")}
        base = args.config if args.config else {}
        payload = harness.run_experiment(base, overrides)
        for row in payload["summary"]:
            print(f"{row['function']} {row['method']}: "
                  f"log-regret {row['mean_final_log_regret']:.2f} "
                  f"± {row['std_final_log_regret']:.2f}, "
                  f"cost {row['mean_final_cost']:.2f} ± {row['std_final_cost']:.2f} "
                  f"({row['n_seeds']} seeds)")
        return 0

    if args.command == "escape":
        result = harness.run_escape_experiment(args.mode, n_points=args.points,
                                               n_samples=args.samples,
                                               repetitions=args.repetitions,
                                               seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"escape_{args.mode}.json"
        path.write_text(json.dumps(result, indent=2) + "\n")
        print(f"{args.mode}: p_hat = {result['mean']:.3f} ± {result['std']:.3f} "
              f"({args.repetitions} repetitions) -> {path}")
        return 0

    if args.command == "plot":
        paths = harness.plot_run_directory(args.in_dir, args.out)
        for p in paths:
            print(p)
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
