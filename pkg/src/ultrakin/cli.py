"""Command line entry point: ``ultrakin <mode> [options]``.

Exit codes: 0 success, 2 bad configuration (including reaction syntax
and an unwritable output directory), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import FORMATS, MODES, ConfigError, RunConfig, load_config
from .network import ParseError
from .workbench import NumericFailure, export, run

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _formats(text: str) -> tuple[str, ...]:
    vals = tuple(x.strip() for x in text.split(",") if x.strip())
    bad = [v for v in vals if v not in FORMATS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"formats must be a subset of {','.join(FORMATS)}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ultrakin", description="Ultracold reaction kinetics workbench.")
    ap.add_argument("mode", choices=MODES)
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--network", metavar="FILE", help="reaction network file")
    src.add_argument("--reaction", metavar="TEXT", help="reaction network given inline")
    ap.add_argument("--config", metavar="FILE", help="run configuration; flags override it")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--format", type=_formats, dest="formats", metavar="csv,json")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--n", type=float, help="initial mean atom number")
    ap.add_argument("--cutoff", type=int)
    ap.add_argument("--tau-max", type=float)
    ap.add_argument("--dtau", type=float)
    ap.add_argument("--c1", type=float)
    ap.add_argument("--c2", type=float)
    ap.add_argument("--energy", type=float)
    ap.add_argument("--trajectories", type=int)
    ap.add_argument("--horizon", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        base = load_config(args.config) if args.config else RunConfig(mode=args.mode)
        if base.mode != args.mode:
            base = base.with_updates(mode=args.mode)
        updates = {k: v for k, v in vars(args).items()
                   if k not in ("mode", "config", "network") and v is not None}
        if args.network is not None:
            updates["network_file"] = args.network
        if "reaction" in updates or "network_file" in updates:
            # a network given on the command line replaces one from the config
            base = replace(base, reaction=None, network_file=None)
        cfg = base.with_updates(**updates)
        bundle = run(cfg)
    except (ConfigError, ParseError) as exc:
        print(f"ultrakin: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericFailure as exc:
        print(f"ultrakin: numerical failure in {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        paths = export(bundle, cfg.out, cfg.formats)
    except OSError as exc:
        print(f"ultrakin: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
