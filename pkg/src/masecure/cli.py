"""Command-line entry point: ``masecure {run,sweep,groups,oracle}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import default_config, load_config
from .exceptions import ConfigError, DomainError, InfeasibleError, NumericalError, StageError
from .experiments import ROW_FIELDS, emit_group_map, load_spec, run_sweep, write_rows
from .oracle import run_oracle_suite, write_reports
from .pipeline import METHODS, Scenario, full_pipeline, place

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="masecure", description="RIS-aided movable-antenna secure downlink design")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="scenario YAML (defaults if omitted)")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", type=Path, help="output file or directory")
        sp.add_argument("--quiet", action="store_true")

    r = sub.add_parser("run", help="single scenario through the full pipeline")
    common(r)
    r.add_argument("--method", choices=METHODS, help="placement method (default from config)")

    s = sub.add_parser("sweep", help="run an experiment spec")
    s.add_argument("--spec", type=Path, required=True)
    s.add_argument("--seed", type=int, default=0, help="master seed")
    s.add_argument("--out", type=Path, help="output directory (overrides the spec)")
    s.add_argument("--quiet", action="store_true")

    g = sub.add_parser("groups", help="emit the candidate group map")
    common(g)
    g.add_argument("--method", choices=("alg2", "alg3"), default="alg3")

    o = sub.add_parser("oracle", help="run the oracle suite")
    common(o)
    o.add_argument("--samples", type=int, default=100_000)
    return p


def _scenario(args):
    cfg, geo = load_config(args.config) if args.config else default_config()
    return Scenario.build(cfg, geo, args.seed)


def _say(args, msg):
    if not args.quiet:
        print(msg)


def cmd_run(args):
    scn = _scenario(args)
    res = full_pipeline(scn, args.method)
    rep = res.report
    row = dict(sweep_value="", seed=args.seed, iterations=res.iterations, wall_ms=None,
               status="ok", **rep.as_row())
    if args.out:
        write_rows(args.out, ROW_FIELDS, [row])
    _say(args, f"R_U={rep.R_U:.6f} R_E={rep.R_E:.6f} R_s={rep.R_s:.6f} "
               f"iterations={res.iterations} selected={res.selection.indices.tolist()}")
    return EXIT_OK


def cmd_sweep(args):
    spec = load_spec(args.spec, args.out)
    out = run_sweep(spec, args.seed, quiet=args.quiet)
    failed = sum(r["status"] != "ok" for rs in out.values() for r in rs)
    _say(args, f"wrote {len(out) + 1} CSV files to {spec.output} ({failed} failed points)")
    return EXIT_OK


def cmd_groups(args):
    scn = _scenario(args)
    _, plan, _ = place(scn, args.method)
    path = args.out or Path("groups.csv")
    emit_group_map(plan, scn.geo, path)
    _say(args, f"{len(plan.groups)} groups, {plan.selection.count} selected -> {path}")
    return EXIT_OK


def cmd_oracle(args):
    scn = _scenario(args)
    reports = run_oracle_suite(scn, args.samples)
    path = args.out or Path("oracle.csv")
    write_reports(reports, path)
    bad = [r for r in reports if not r.passed]
    _say(args, f"{len(reports) - len(bad)}/{len(reports)} checks passed -> {path}")
    return EXIT_OK if not bad else EXIT_NUMERICAL


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep, "groups": cmd_groups,
               "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, InfeasibleError, StageError, DomainError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
