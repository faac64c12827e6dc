"""Command-line scenario runner and acceptance gate.

    cohentropy run <config.json> [--out DIR] [--seed N] [--threads N]
    cohentropy verify [--threads N] [--perturb CRITERION]

`run` executes one configured scenario and writes a time-series CSV plus a
structured-text summary; exit code 0 on all-pass, 2 on any invariant failure,
1 on configuration errors.  Outputs are written only after the computation
completes, so failures never leave partial files behind.  `verify` runs the
built-in acceptance suite and prints one line per criterion.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .acceptance import run_all
from .exceptions import CohentropyError, ConfigError
from .scenarios import config_from_json, run_scenario_config


def _thread_count(args: argparse.Namespace) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("COHENTROPY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"COHENTROPY_THREADS={env!r} is not an integer") from exc
    return 1


def _cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.config)
    try:
        cfg = config_from_json(path.read_text())
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        threads = _thread_count(args)
    except OSError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    written: list[Path] = []
    try:
        result = run_scenario_config(cfg, threads=threads)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "timeseries.csv"
        summary_path = out_dir / "summary.txt"
        csv_path.write_text(result.csv_text)
        written.append(csv_path)
        summary_path.write_text(result.summary_text)
        written.append(summary_path)
    except ConfigError as exc:
        _cleanup(written)
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except CohentropyError as exc:
        _cleanup(written)
        print(f"scenario failed: {exc}", file=sys.stderr)
        return 2
    if result.invariant_failures:
        print(f"{result.invariant_failures} invariant failure(s); see {summary_path}", file=sys.stderr)
        return 2
    print(f"wrote {csv_path} and {summary_path}")
    return 0


def _cleanup(paths: list[Path]) -> None:
    for p in paths:
        try:
            p.unlink()
        except OSError:
            pass


def _cmd_verify(args: argparse.Namespace) -> int:
    threads = _thread_count(args)
    results = run_all(threads=threads, perturb=args.perturb)
    lines = [r.line() for r in results]
    for line in lines:
        print(line)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "verify_summary.txt").write_text("\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else 2


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cohentropy",
        description="Entropy-production decomposition scenarios for degenerate open systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured scenario")
    p_run.add_argument("config", help="path to a JSON scenario configuration")
    p_run.add_argument("--out", default="out", help="output directory (default: ./out)")
    p_run.add_argument("--seed", type=int, default=None, help="base seed override")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: COHENTROPY_THREADS or 1)")
    p_run.set_defaults(func=_cmd_run)

    p_verify = sub.add_parser("verify", help="run the built-in acceptance suite")
    p_verify.add_argument("--out", default=None, help="also write the summary to this directory")
    p_verify.add_argument("--threads", type=int, default=None)
    p_verify.add_argument("--perturb", default=None, metavar="CRITERION",
                          help="poison one criterion's tolerance (self-test; must fail)")
    p_verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
