"""Command-line driver: ``uwbmud {ber,complexity,oracle-check}``.

Exit codes: 0 on success, 2 on configuration errors, 3 when a receiver had
to drop realizations for exceeding its enumeration limit, 4 when an oracle
check fails.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import checks
from .channel import CIRFormatError
from .harness import (BER_COLUMNS, COMPLEXITY_COLUMNS, MULTIPLICATION_COLUMNS, complexity_rows,
                      emit_results, load_spec, render, run_ber, run_complexity)
from .model import ConfigurationError

EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_CHECK = 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key: value YAML experiment file")
    common.add_argument("--seed", type=int, default=None, help="overrides rng_seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--out", type=Path, default=None, help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="uwbmud", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ber", parents=[common], help="BER-vs-SNR sweep")
    sub.add_parser("complexity", parents=[common], help="collision-count distribution")
    check = sub.add_parser("oracle-check", parents=[common],
                           help="compare fast detectors with brute-force oracles")
    check.add_argument("--scale", type=float, default=1.0, help="multiplier on instance counts")
    return parser


def _write(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _ber(args) -> int:
    spec = load_spec(args.config, args.seed)
    result = run_ber(spec, args.threads)
    if args.out is None:
        _write(render(result.rows, BER_COLUMNS, args.format), None)
    else:
        emit_results(result.rows, BER_COLUMNS, args.format, args.out)
        mult_path = args.out.with_name(args.out.stem + "_multiplications" + args.out.suffix)
        emit_results(result.multiplications, MULTIPLICATION_COLUMNS, args.format, mult_path)
    if result.excluded:
        for label, count in sorted(result.excluded.items()):
            print(f"uwbmud: {label}: {count} realization(s) excluded, collisions exceed "
                  f"max_exact_bits={spec.max_exact_bits}", file=sys.stderr)
        return EXIT_CAPACITY
    return 0


def _complexity(args) -> int:
    spec = load_spec(args.config, args.seed)
    rows = complexity_rows(run_complexity(spec, args.threads))
    _write(render(rows, COMPLEXITY_COLUMNS, args.format), args.out)
    return 0


def _oracle_check(args) -> int:
    results = checks.run_all(seed=args.seed or 0, scale=args.scale)
    lines = [r.line() for r in results]
    _write("\n".join(lines) + "\n", args.out)
    return 0 if all(r.passed for r in results) else EXIT_CHECK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.threads < 1:
        print("uwbmud: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.command != "oracle-check" and args.config is None:
        print(f"uwbmud: {args.command} needs --config", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"ber": _ber, "complexity": _complexity, "oracle-check": _oracle_check}[args.command]
    try:
        return handler(args)
    except (ConfigurationError, CIRFormatError, FileNotFoundError) as exc:
        print(f"uwbmud: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
