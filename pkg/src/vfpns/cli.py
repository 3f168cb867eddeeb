"""Command-line entry point: one subcommand per experiment."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3

SUBCOMMANDS = {name.replace("_", "-"): name for name in ex.EXPERIMENTS}


def _schema_text() -> str:
    lines = ["configuration fields (JSON object, unknown fields rejected):"]
    for key, (_, desc) in ex.SCHEMA.items():
        lines.append(f"  {key:<17} {desc}")
    lines.append("exit codes: 0 pass, 1 check failure, 2 config error, 3 runtime abort")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfpns",
        description="Fourier-Hermite experiments for the kinetic-fluid system.",
        epilog=_schema_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in SUBCOMMANDS:
        p = sub.add_parser(cmd, help=f"run the {cmd} experiment", epilog=_schema_text(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--output", metavar="DIR", help="run directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides the file)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    experiment = SUBCOMMANDS[args.command]
    raw = {}
    try:
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                raw = json.load(fh)
        cfg = ex.resolve_config(raw, experiment, args.seed, args.output)
    except (OSError, json.JSONDecodeError, ex.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, report = ex.run_experiment(cfg)
    except Exception as exc:  # unexpected failure after a valid config
        logging.getLogger("vfpns").exception("run aborted")
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    for name, ok in report.soft_checks.items():
        print(f"{'pass' if ok else 'miss'}  {name} (soft)")
    print(f"results written to {cfg['output_dir']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
