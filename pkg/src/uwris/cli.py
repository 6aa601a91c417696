"""Command-line front end.

    uwris run <config>        run the configured sweep, write CSV outputs
    uwris ellipsoid <config>  confidence-ellipsoid study
    uwris validate <config>   parse + feasibility check, no computation

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .configio import ExperimentConfig, load_config
from .errors import ConfigError, UwrisError
from .experiments import (
    emit_ellipsoid_outputs,
    emit_outputs,
    place_nodes,
    run_ellipsoid_study,
    run_experiment,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwris",
        description="Reflector-assisted underwater acoustic downlink simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "run the configured Monte Carlo sweep"),
        ("ellipsoid", "run the confidence-ellipsoid study"),
        ("validate", "parse and validate a configuration, no compute"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("config", help="path to the key = value configuration file")
        p.add_argument("--seed", type=int, default=None, help="override root_seed")
        p.add_argument("--trials", type=int, default=None, help="override trials")
        p.add_argument("--workers", type=int, default=None, help="override worker count")
        p.add_argument("--out", default=None, help="override output directory")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["root_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["output_dir"] = args.out
    return cfg.with_overrides(**overrides) if overrides else cfg


def _validate(cfg: ExperimentConfig) -> None:
    """Feasibility checks that need no heavy computation."""
    rng = np.random.default_rng(cfg.root_seed)
    for value in cfg.sweep_values:
        d_sr = value if cfg.sweep == "d_sr" else cfg.d_sr
        try:
            place_nodes(cfg, d_sr, rng)
        except UwrisError as exc:
            raise ConfigError(f"placement infeasible at {cfg.sweep} = {value}: {exc}") from exc
    if cfg.sweep == "p_total" and min(cfg.sweep_values) <= 0:
        raise ConfigError("swept total power must stay positive")
    if cfg.sweep == "m_elements" and any(v != int(v) or v < 1 for v in cfg.sweep_values):
        raise ConfigError("swept element counts must be positive integers")
    if cfg.sweep == "xi" and any(not (0 <= v < 1) for v in cfg.sweep_values):
        raise ConfigError("swept weights must lie in [0, 1)")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        _validate(cfg)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"{args.config}: OK "
              f"(sweep {cfg.sweep} over {list(cfg.sweep_values)}, "
              f"{cfg.trials} trials, variants {','.join(cfg.variants)})")
        return 0

    try:
        if args.command == "run":
            records = run_experiment(cfg)
            paths = emit_outputs(records, cfg.output_dir, cfg)
        else:
            records = run_ellipsoid_study(cfg)
            paths = emit_ellipsoid_outputs(records, cfg.output_dir, cfg)
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
