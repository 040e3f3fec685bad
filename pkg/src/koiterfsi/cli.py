"""
``fsi`` command line.

    fsi run <config.json>
    fsi validate [--inject FAULT]
    fsi diagnose <dir> [<dir> ...] --s 0.25 [--out table.csv]
    fsi geometry cylinder|flat|sphere-table

Exit codes: 0 success, 1 failed validation suite, 2 configuration or argument
error (including a directory without snapshots), 3 solver failure,
4 self-intersection or collar breach, 5 loss of coercivity.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__, faults
from .cli_io import EXIT_CODES, cmd_diagnose, cmd_geometry, cmd_run, cmd_validate
from .config import load_config
from .errors import MissingSnapshots, ParseError, ValidationError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CODES["config"])


def build_parser():
    p = _Parser(prog="fsi", description="Koiter shell / fluid interaction solver")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run a JSON configuration")
    r.add_argument("config")
    v = sub.add_parser("validate", help="run the property suites")
    v.add_argument("--inject", action="append", default=[], choices=faults.KNOWN,
                   help="enable a fault hook (repeatable)")
    d = sub.add_parser("diagnose", help="regularity table of run directories")
    d.add_argument("dirs", nargs="+")
    d.add_argument("--s", type=float, required=True, dest="s")
    d.add_argument("--out", default=None)
    g = sub.add_parser("geometry", help="computed vs closed-form geometry tables")
    g.add_argument("which", choices=("cylinder", "flat", "sphere-table"))
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "run":
        try:
            cfg = load_config(args.config)
        except (OSError, ParseError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CODES["config"]
        except ValidationError as exc:
            for v in exc.violations:
                print(f"invalid: {v}", file=sys.stderr)
            return EXIT_CODES["config"]
        return cmd_run(cfg)
    if args.verb == "validate":
        return cmd_validate(args.inject)
    if args.verb == "diagnose":
        try:
            path, rows = cmd_diagnose(args.dirs, args.s, args.out)
        except (ValueError, MissingSnapshots, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CODES["config"]
        print(f"wrote {path} ({len(rows)} rows)")
        return 0
    return cmd_geometry(args.which)


if __name__ == "__main__":
    sys.exit(main())
