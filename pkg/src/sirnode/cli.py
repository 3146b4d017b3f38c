"""Command-line entry point: ``sirnode baseline|sweep|costs``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .errors import InvalidArgumentError
from .experiment import (ExperimentConfig, export_cost_curves, export_figure_data,
                         parse_config_text, run_baseline, run_sweep, write_baseline)

# flag name -> config field
_FLAG_FIELDS = {
    "lambda": "lambdas", "cost": "costs", "T": "horizon", "steps": "steps",
    "beta": "beta", "gamma": "gamma", "population": "population", "i0": "initial_infected",
    "seed": "seed", "iters": "iterations", "lr": "learning_rate", "mode": "mode", "out": "out",
}


def _csv_floats(text: str):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _csv_words(text: str):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file with ExperimentConfig field names")
    p.add_argument("--lambda", type=_csv_floats, help="comma-separated penalty weights")
    p.add_argument("--cost", type=_csv_words, help="comma-separated cost kinds (c1..c4)")
    p.add_argument("--T", type=float, help="horizon in days")
    p.add_argument("--steps", type=int, help="RK4 steps on [0, T]")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--population", type=float)
    p.add_argument("--i0", type=float, help="initial infected count")
    p.add_argument("--seed", type=int)
    p.add_argument("--iters", type=int, help="Adam iterations per cell")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--mode", choices=["new-infections", "infected-load"])
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    """File values first, then any flag given on the command line."""
    values = {}
    if args.config:
        values.update(parse_config_text(Path(args.config).read_text()))
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = value
    return ExperimentConfig(**values)


def _print_table(days, columns: dict) -> None:
    names = list(columns)
    print("day," + ",".join(names))
    for k, d in enumerate(days):
        print(f"{d}," + ",".join("" if columns[n][k] is None else str(columns[n][k]) for n in names))


def cmd_baseline(args) -> int:
    config = build_config(args)
    result = run_baseline(config)
    _print_table(result.days, {"infected": result.infected, "cumulative": result.cumulative})
    if config.out:
        out = Path(config.out)
        write_baseline(result, out)
        export_figure_data(result, out / "figures")
    return 0


def cmd_sweep(args) -> int:
    config = build_config(args)
    report = run_sweep(config, workers=args.workers)
    for cell in report.cells:
        if cell.ok:
            print(f"lambda={cell.lam:g} {cell.cost}: J={cell.objective:.6f} "
                  f"cumulative(day {cell.days[-1]})={cell.cumulative[-1]}")
        else:
            print(f"lambda={cell.lam:g} {cell.cost}: FAILED {cell.error}")
    return 0 if report.ok else 1


def cmd_costs(args) -> int:
    path = export_cost_curves(args.output, args.points, args.upper)
    print(path)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sirnode", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("baseline", help="uncontrolled run and its day tables")
    _add_common(p)
    p.set_defaults(func=cmd_baseline)
    p = sub.add_parser("sweep", help="train every (lambda, cost) cell")
    _add_common(p)
    p.add_argument("--workers", type=int, default=1, help="parallel cell processes")
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("costs", help="write weighted cost curves on [0, 0.99]")
    p.add_argument("output")
    p.add_argument("--points", type=int, default=100)
    p.add_argument("--upper", type=float, default=0.99)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_costs)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidArgumentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
