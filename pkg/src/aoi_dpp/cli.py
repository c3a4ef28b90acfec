"""Command line front end.

    aoi-dpp run <config.yaml>
    aoi-dpp preset {fig1,fig2,fig3} [--out DIR] [--seed N] [--horizon N] [--replications N]
    aoi-dpp oracle <config.yaml>

The default output directory is ``$AOI_DPP_OUTPUT_DIR/<name>`` (``out/<name>``
when the variable is unset).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import PRESETS, ConfigError, load_config
from .report import oracle_report, run_experiment

log = logging.getLogger("aoi_dpp")


def _overrides(args) -> dict:
    return {"seed": args.seed, "horizon": args.horizon, "replications": args.replications}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aoi-dpp", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--workers", type=int, default=1, help="parallel episodes (threads)")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment file")
    run.add_argument("config", type=Path)

    pre = sub.add_parser("preset", help="run a shipped experiment preset")
    pre.add_argument("name", choices=PRESETS)
    pre.add_argument("--out", type=Path)
    pre.add_argument("--seed", type=int)
    pre.add_argument("--horizon", type=int)
    pre.add_argument("--replications", type=int)

    orc = sub.add_parser("oracle", help="constrained-MDP optimum and cost bound check (one user)")
    orc.add_argument("config", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            spec = load_config(args.config)
        elif args.command == "preset":
            spec = load_config(args.name, _overrides(args))
            if args.out is not None:
                spec = dataclasses.replace(spec, out_dir=args.out)
        else:
            spec = load_config(args.config)
            sys.stdout.write(oracle_report(spec, args.workers))
            return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = run_experiment(spec, args.workers)
    if status == 0:
        print(f"wrote results to {spec.out_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
