"""Command-line entry point: ``vehd run <config>`` and ``vehd converge <config>``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .driver import FIELDS, convergence_study, run_case
from .errors import ConfigurationError
from .output import load_config, write_convergence_csv

logger = logging.getLogger("vehd")


def _dt_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad time-step list {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(prog="vehd", description=__doc__)
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one case from a config file")
    run.add_argument("config", type=Path)

    conv = sub.add_parser("converge", help="temporal convergence sweep")
    conv.add_argument("config", type=Path)
    conv.add_argument("--dts", type=_dt_list, required=True,
                      help="comma-separated time steps, e.g. 0.1,0.05,0.025")
    conv.add_argument("--ref-dt", type=float, default=None,
                      help="reference time step (default: finest / 32)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        params = load_config(args.config)
        if args.command == "run":
            result = run_case(params, progress=not args.quiet)
            last = result.diagnostics[-1]
            print(f"finished {params.case}: {last.step} steps, t={last.time:.6g}, "
                  f"energy={last.energy:.12g}, xi={last.xi:.12g}")
        else:
            res = convergence_study(params, args.dts, args.ref_dt, progress=not args.quiet)
            out = Path(params.output_dir or ".")
            out.mkdir(parents=True, exist_ok=True)
            write_convergence_csv(out / "convergence.csv", res)
            for f in FIELDS:
                orders = ", ".join("-" if o is None else f"{o:.2f}" for o in res.orders[f])
                print(f"{f:>4}: orders {orders}")
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
