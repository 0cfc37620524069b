"""Command line entry point: ``python -m chaoslab <recipe> --config PATH``.

Exit codes: 0 pass, 2 configuration error, 3 numerical failure, 4 audit
violation. Every run writes ``manifest.json`` next to the recipe outputs.
"""
from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from .config import DEFAULTS, SCHEMA_VERSION, ExperimentConfig, load_config
from .errors import ChaosLabError, ConfigError
from .recipes import RECIPES, run_recipe, write_json

from . import __version__

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_AUDIT = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaoslab", description="Modulated free energy experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RECIPES:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML experiment file (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="master seed, overrides ensemble.master_seed")
        p.add_argument("--out", type=Path, help="output directory, overrides output_dir")
        p.add_argument("--threads", type=int, help="worker threads (default: CHAOSLAB_THREADS or core count)")
    return parser


def manifest(cfg: ExperimentConfig, command: str, wall_time: float, summary: dict | None, status: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg.data,
        "master_seed": cfg["ensemble"]["master_seed"],
        "versions": {"chaoslab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "wall_time_s": wall_time,
        "status": status,
        "summary_status": (summary or {}).get("status"),
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig(_defaults())
        if args.seed is not None:
            if args.seed < 0 or args.seed >= 2**64:
                raise ConfigError(["--seed: must be an unsigned 64-bit integer"])
            cfg = cfg.with_seed(args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError(["--threads: must be >= 1"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else Path(cfg["output_dir"])
    start = time.perf_counter()
    summary, code, status = None, EXIT_OK, "pass"
    try:
        summary = run_recipe(args.command, cfg, out, args.threads)
    except ChaosLabError as exc:
        code = exc.exit_code
        status = {EXIT_CONFIG: "config_error", EXIT_AUDIT: "audit_violation"}.get(code, "numerical_failure")
        print(f"{status}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"filesystem error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_json(out / "manifest.json", manifest(cfg, args.command, time.perf_counter() - start, summary, status))
    except OSError as exc:
        print(f"filesystem error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if code == EXIT_OK:
        print(json.dumps({"command": args.command, "out": str(out), "status": status}))
    return code


def _defaults():
    import copy

    return copy.deepcopy(DEFAULTS)


if __name__ == "__main__":
    sys.exit(main())
