"""Command-line entry point: run, paper-scenario, validate, oracle maxmin."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ParseError, ScenarioError, ValidationError
from .oracle import parse_flows, parse_links, water_fill_exact
from .runner import EXIT_INCOMPLETE, EXIT_INVALID, EXIT_IO, EXIT_OK, Simulation
from .scenario import emit_paper_scenario, load_scenario


def _load(path):
    try:
        return load_scenario(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"invalid: {problem}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def cmd_run(args) -> int:
    config = _load(args.scenario)
    if args.until is not None:
        config.horizon_hours = args.until
    if args.sample_interval is not None:
        config.sample_interval_s = args.sample_interval
    if args.until is not None or args.sample_interval is not None:
        from .scenario import validate
        problems = validate(config)
        if problems:
            for problem in problems:
                print(f"invalid: {problem}", file=sys.stderr)
            return EXIT_INVALID
    simulation = Simulation(config, seed=args.seed)
    summary = simulation.run()
    try:
        simulation.write_outputs(args.out)
    except OSError as exc:
        print(f"error: cannot write outputs to {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"{summary.jobs_completed}/{summary.jobs_total} jobs completed "
          f"at t={summary.end_s / 3600:.2f} h")
    return summary.exit_code


def cmd_paper_scenario(args) -> int:
    try:
        emit_paper_scenario(args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _load(args.scenario)
    print(f"ok: {len(config.sites)} sites, {config.total_slots} slots, {config.job_count} jobs")
    return EXIT_OK


def cmd_oracle(args) -> int:
    try:
        links = parse_links(args.links)
        flows = parse_flows(args.flows)
        alloc = water_fill_exact(flows, links)
    except (ValueError, KeyError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = {fid: None if r is None else float(r) for fid, r in alloc.items()}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="distcloud",
                                     description="Distributed-cloud batch system simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write metrics")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--until", type=float, default=None, help="horizon in hours")
    p.add_argument("--sample-interval", type=float, default=None, help="seconds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("paper-scenario", help="write the built-in four-cloud preset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_paper_scenario)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="reference solvers")
    osub = p.add_subparsers(dest="oracle", required=True)
    m = osub.add_parser("maxmin", help="exact max-min fair allocation")
    m.add_argument("--flows", required=True, help="f1=L1+L2@DEMAND,f2=L1 (no @ = uncapped)")
    m.add_argument("--links", required=True, help="L1=CAPACITY,L2=CAPACITY")
    m.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
