"""Command-line entry point: ``rsmadeg run | certify | version``."""

import argparse
import logging
import sys
from dataclasses import replace

from . import __version__
from .errors import ValidationError
from .harness import EXIT_ERROR, load_spec, run


def _add_run_args(p):
    p.add_argument("--spec", required=True, help="path to a JSON experiment spec")
    p.add_argument("--out", help="output directory (overrides the spec's output_dir)")
    p.add_argument("--threads", type=int, help="worker processes (default: $RSMADEG_THREADS or 1)")
    p.add_argument("--quiet", action="store_true", help="only report warnings and errors")


def build_parser():
    parser = argparse.ArgumentParser(prog="rsmadeg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_args(sub.add_parser("run", help="run an experiment spec"))
    _add_run_args(sub.add_parser("certify", help="run a spec in certify mode"))
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "version":
        print(__version__)
        return 0
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        spec = load_spec(args.spec)
        if args.command == "certify" and spec.mode != "certify":
            spec = replace(spec, mode="certify")
        return run(spec, out=args.out, threads=args.threads)
    except (ValidationError, OSError) as exc:
        print(f"rsmadeg: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
