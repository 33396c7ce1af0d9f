"""Command-line entry point: one subcommand per experiment kind.

Every subcommand takes the global flags --config/--out/--workers/--seed
plus a few convenience overrides, validates the configuration, runs the
experiment through the harness, and exits 0 only when every pass/fail
flag in the resulting metrics is green.
"""

import argparse
import json
import sys

from .config import validate_config
from .errors import ConfigError, DomainError, ResolutionError, SolverError
from .harness import run


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file (defaults apply if omitted)")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--workers", type=int, default=1)
    sub.add_argument("--seed", type=int, default=None)


def build_parser():
    p = argparse.ArgumentParser(
        prog="dualporo",
        description="Numerical laboratory for two-phase flow in "
                    "double-porosity media with thin fissures",
    )
    subs = p.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("cell-perm", help="periodic cell problems and "
                         "effective permeability")
    _add_common(sp)
    sp.add_argument("--d", type=int, default=None)
    sp.add_argument("--delta", type=str, default=None,
                    help="comma-separated fissure thicknesses")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--kf", type=float, default=None)

    sp = subs.add_parser("block-asymptotics", help="matrix-block screened "
                         "solves vs the thin-fissure asymptote")
    _add_common(sp)

    sp = subs.add_parser("kernel-check", help="memory-quadrature validation "
                         "against closed-form convolutions")
    _add_common(sp)

    sp = subs.add_parser("simulate", help="macroscale waterflood simulation")
    _add_common(sp)

    sp = subs.add_parser("delta-sweep", help="finite-thickness family vs "
                         "the homogenized limit model")
    _add_common(sp)
    sp.add_argument("--deltas", type=str, default=None,
                    help="comma-separated decreasing thickness list")

    sp = subs.add_parser("subgrid-compare", help="sub-grid block source vs "
                         "memory-kernel source")
    _add_common(sp)
    return p


def _load_raw(args):
    if args.config:
        with open(args.config) as f:
            raw = json.load(f)
    else:
        raw = {}
    raw["experiment"] = args.command
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.command == "cell-perm":
        cell = raw.setdefault("cell", {})
        if args.d is not None:
            cell["d"] = args.d
        if args.delta is not None:
            cell["deltas"] = [float(x) for x in args.delta.split(",")]
        if args.n is not None:
            cell["n"] = args.n
        if args.kf is not None:
            cell["kf"] = args.kf
    if args.command == "delta-sweep" and args.deltas is not None:
        raw.setdefault("sweep", {})["deltas"] = [
            float(x) for x in args.deltas.split(",")]
    return raw


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = validate_config(_load_raw(args))
    except ConfigError as e:
        print("invalid config:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return 2
    try:
        record = run(cfg, args.out, workers=args.workers)
    except (DomainError, ResolutionError, SolverError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 3
    for name, ok in sorted(record.flags.items()):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"metrics written to {args.out}/metrics.json "
          f"({record.wall_clock_s:.2f}s)")
    return 0 if record.all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
