"""Command-line interface (``rmobo``)."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import driver
from .problem import PROBLEMS, get_problem


def _cmd_run(args) -> int:
    if args.config:
        cfg = driver.RunConfig.from_file(args.config)
        if args.out:
            cfg = driver.RunConfig(**{**cfg.__dict__, "out": args.out})
    else:
        cfg = driver.RunConfig(args.problem, args.method, args.acq, args.q, args.iters, seed=args.seed,
                               out=args.out)
    record = driver.run(cfg)
    print(f"{record.n_evaluations} evaluations written to {cfg.out}" if cfg.out else
          f"{record.n_evaluations} evaluations")
    if not cfg.out:
        front = driver.recommend(record)
        np.savetxt(sys.stdout, np.hstack([front.origin_inputs, front.points]), fmt="%.10g", delimiter=",")
    return 0


def _cmd_reference(args) -> int:
    ref = driver.compute_reference_front(get_problem(args.problem), args.seed)
    path = driver.reference_front_path(args.out, args.problem, args.seed)
    driver.save_reference_front(ref, path)
    print(f"{len(ref.points)} points written to {path}")
    return 0


def _cmd_score(args) -> int:
    record = driver.load_record(args.run)
    ref = driver.load_reference_front(args.reference)
    history = driver.score_run(record, ref)
    out = Path(args.out) if args.out else Path(args.run) / "avd.csv"
    np.savetxt(out, history, fmt="%.17g", header="avd", comments="")
    print(f"final AVD {history[-1]:.6g}; history written to {out}")
    return 0


def _cmd_suite(args) -> int:
    from .suite import SuiteConfig, run_suite

    out = run_suite(SuiteConfig.from_file(args.config))
    print(f"suite results in {out}")
    return 0


def _cmd_prop1(args) -> int:
    report = driver.check_proposition1(get_problem(args.problem))
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmobo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one optimization")
    p.add_argument("--problem", choices=sorted(PROBLEMS), default="sinlinforrester")
    p.add_argument("--method", choices=["rmobo", "mobo", "ea-gp-os"], default="rmobo")
    p.add_argument("--acq", choices=["ehvi", "qehvi"], default="ehvi")
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--iters", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="key = value run configuration file")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("reference-front", help="NSGA-II reference front on the true Bayes risk")
    p.add_argument("--problem", choices=sorted(PROBLEMS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/reference")
    p.set_defaults(func=_cmd_reference)

    p = sub.add_parser("score", help="AVD history of a run against a reference front")
    p.add_argument("--run", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("suite", help="run a benchmark suite from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("check-prop1", help="grid check of the distinct-robust-front condition")
    p.add_argument("--problem", choices=sorted(PROBLEMS), required=True)
    p.set_defaults(func=_cmd_prop1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
