"""Command-line entry point: ``netctl run``, ``netctl verify``, ``netctl config`` and ``netctl list``."""

from __future__ import annotations

import argparse
import json
import sys

from .studies import STUDIES, load_config, resolve_config, run_study

U64_MAX = 2**64 - 1


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2^64 - 1], got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _criteria(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netctl", description="Data-driven network control studies")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a study and write raw.csv, summary.csv and meta.json")
    run.add_argument("study", choices=sorted(STUDIES))
    run.add_argument("--config", help="JSON file overriding the study defaults")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=_u64, default=0, help="master seed (unsigned 64-bit)")
    run.add_argument("--workers", type=_positive, default=1, help="worker processes")

    verify = sub.add_parser("verify", help="run the acceptance checks")
    verify.add_argument("--only", type=_criteria, help="comma-separated criterion numbers")

    cfg = sub.add_parser("config", help="print a study's default config as JSON")
    cfg.add_argument("study", choices=sorted(STUDIES))

    sub.add_parser("list", help="list available studies")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            config = load_config(args.config) if args.config else None
            result = run_study(args.study, config, args.out, args.seed, args.workers)
        except (OSError, ValueError) as exc:
            print(f"netctl: error: {exc}", file=sys.stderr)
            return 2
        meta = result.meta
        print(f"{args.study}: {meta['rows']} rows ({meta['error_rows']} with errors) -> {args.out}")
        return 0
    if args.command == "verify":
        from .acceptance import CRITERIA, run_acceptance

        numbers = args.only or sorted(CRITERIA)
        unknown = [k for k in numbers if k not in CRITERIA]
        if unknown:
            print(f"netctl: error: unknown criteria {unknown}", file=sys.stderr)
            return 2
        results = run_acceptance(numbers)
        passed = sum(r.passed for r in results)
        print(f"{passed}/{len(results)} criteria passed")
        return 0 if passed == len(results) else 1
    if args.command == "config":
        print(json.dumps(resolve_config(args.study), indent=2))
        return 0
    for name in sorted(STUDIES):
        print(name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
