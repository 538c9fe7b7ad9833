"""``tailrisk estimate|optimize|compare --config FILE --seed N --out DIR [--verbose]``.

Exit status: 0 on success, 2 on a configuration error, 3 when a comparison
row ran out of sample budget before reaching its target precision.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, load_config
from .dist import DomainError

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tailrisk", description="CVaR estimation and optimization with importance sampling")
    p.add_argument("command", choices=("estimate", "optimize", "compare"))
    p.add_argument("--config", required=True, help="JSON experiment file")
    p.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--verbose", action="store_true", help="progress lines on stderr")
    return p


def _write(out: Path, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def run(command: str, cfg) -> int:
    out = Path(cfg.out or ".")
    if command == "estimate":
        rows = harness.cmd_estimate(cfg)
        _write(out, "estimate.csv", harness.to_csv(harness.ESTIMATE_COLUMNS, rows))
        return EXIT_OK
    if command == "optimize":
        rows, report = harness.cmd_optimize(cfg)
        _write(out, "trajectory.csv", harness.to_csv(harness.TRAJECTORY_COLUMNS, rows))
        _write(out, "report.json", json.dumps(report, indent=2) + "\n")
        return EXIT_OK
    rows = harness.cmd_compare(cfg)
    _write(out, "compare.csv", harness.to_csv(harness.COMPARE_COLUMNS, rows))
    return EXIT_BUDGET if any(r["status"] == "budget" for r in rows) else EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "out": args.out, "verbose": True if args.verbose else None}
    try:
        cfg = load_config(args.config, overrides)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return run(args.command, cfg)
    except (ConfigError, DomainError, NotImplementedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
