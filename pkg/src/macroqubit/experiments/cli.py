"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 runtime or numeric failure,
4 partial sweep failure.
"""

import argparse
import json
import sys

from .config import ConfigError, load_config, resolve_config
from .runner import RECORD_NAME, ScenarioError, output_dir_for, run_scenario, run_sweep, verify_manifest

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_PARTIAL = 0, 2, 3, 4

# scenarios accepted by each subcommand; None means any
SUBCOMMANDS = {
    "simulate": None,
    "sweep": ("sweep",),
    "synthesize-gate": ("gate-calibration",),
    "tomography": ("tomography-run", "delusion-demo"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="macroqubit", description="Restricted tomography of spin-j systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run a {name} config")
        p.add_argument("--config", required=True, help="scenario config JSON")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
        p.add_argument("--exact-probabilities", action="store_true",
                       help="use exact outcome probabilities instead of shot sampling")
    p = sub.add_parser("report", help="summarize and verify a finished run")
    p.add_argument("run_dir", nargs="?", help="run directory containing " + RECORD_NAME)
    p.add_argument("--out", help="run directory (alternative to the positional argument)")
    return parser


def _apply_overrides(cfg, args):
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.exact_probabilities:
        target = cfg["sweep"]["base"] if cfg.get("scenario") == "sweep" and isinstance(cfg.get("sweep"), dict) else cfg
        if isinstance(target.get("measurement"), dict) or target.get("scenario") in ("tomography-run", "delusion-demo"):
            target["measurement"] = {**(target.get("measurement") or {}), "shots": "exact"}
    return cfg


def _run(args):
    if args.workers < 1:
        raise ConfigError("--workers", "must be >= 1")
    raw = load_config(args.config)
    if not isinstance(raw, dict):
        raise ConfigError("config", "configuration must be a JSON object")
    cfg = resolve_config(_apply_overrides(raw, args))
    allowed = SUBCOMMANDS[args.command]
    if allowed is not None and cfg["scenario"] not in allowed:
        raise ConfigError("scenario", f"{args.command} expects one of {list(allowed)}, got {cfg['scenario']!r}")
    out_dir = output_dir_for(cfg, args.out)
    if cfg["scenario"] == "sweep":
        record, n_failed = run_sweep(cfg, out_dir, args.workers)
        print(f"sweep: {record.metrics['cells']} cells, {n_failed} failed -> {out_dir}")
        return EXIT_PARTIAL if n_failed else EXIT_OK
    record = run_scenario(cfg, out_dir)
    print(json.dumps({"scenario": cfg["scenario"], "out": out_dir, "metrics": record.metrics},
                     sort_keys=True, default=str))
    return EXIT_OK


def _report(args):
    run_dir = args.run_dir or args.out
    if not run_dir:
        raise ConfigError("run_dir", "give a run directory")
    try:
        record, problems = verify_manifest(run_dir)
    except FileNotFoundError:
        raise ConfigError("run_dir", f"no {RECORD_NAME} in {run_dir}") from None
    print(json.dumps({
        "scenario": record.config.get("scenario"),
        "status": record.status,
        "config_hash": record.config_hash,
        "version": record.version,
        "metrics": record.metrics,
        "files": len(record.manifest),
        "manifest_problems": problems,
    }, indent=2, sort_keys=True))
    return EXIT_RUNTIME if problems or record.status == "failed" else EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _report(args) if args.command == "report" else _run(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
