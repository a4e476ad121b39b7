"""Command-line front end.

    fdd2d run --config configs/table1.toml --sweep beta --drops 50 --seed 7
    fdd2d run --config configs/table1.toml --sweep gain --set A=32 --set N_values=[10,20,30]

The config file is flat ``key = value`` text (TOML syntax) whose keys are
ExperimentConfig field names; ``--set`` applies the same syntax per key.
Exit codes: 0 success, 1 I/O failure, 2 usage error.
"""
import argparse
from dataclasses import dataclass, field
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .harness import SWEEP_ALIASES, SWEEPS, ExperimentConfig, run_sweep, warnings_for, write_outputs

EXIT_OK, EXIT_IO, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class CliArgs:
    config_path: str | None
    sweep: str | None
    overrides: dict = field(default_factory=dict)
    output_dir: str = "results"
    seed: int | None = None
    drops: int | None = None
    quiet: bool = False


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text  # bare strings such as FD,HD or beta


def _parse_override(item: str):
    if "=" not in item:
        raise UsageError(f"--set expects key=value, got {item!r}")
    key, value = item.split("=", 1)
    key = key.strip()
    if key not in ExperimentConfig.field_names():
        raise UsageError(f"unknown config key {key!r}")
    return key, _parse_value(value.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdd2d", description="Full-duplex D2D underlay Monte Carlo sweeps")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one sweep and write CSV + summary")
    run.add_argument("--config", dest="config_path", help="flat key=value config file")
    run.add_argument("--sweep", type=str.lower,
                     choices=list(SWEEPS) + list(SWEEP_ALIASES), help="sweep to run")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config field (repeatable)")
    run.add_argument("--output-dir", default="results")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--drops", type=int, help="number of drops per sweep point")
    run.add_argument("-q", "--quiet", action="store_true", help="no progress output")
    return parser


def parse_args(argv=None) -> CliArgs:
    """Parse and validate; usage problems exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        overrides = dict(_parse_override(s) for s in ns.overrides)
    except UsageError as exc:
        parser.error(str(exc))
    if ns.config_path is not None and not os.path.isfile(ns.config_path):
        parser.error(f"config file not found: {ns.config_path}")
    if ns.drops is not None and ns.drops < 1:
        parser.error("--drops must be >= 1")
    return CliArgs(ns.config_path, ns.sweep, overrides, ns.output_dir, ns.seed, ns.drops, ns.quiet)


def load_config(path: str | None, overrides=None, **extra) -> ExperimentConfig:
    values = {}
    if path is not None:
        with open(path, "rb") as fh:
            values = tomllib.load(fh)
        unknown = set(values) - set(ExperimentConfig.field_names())
        if unknown:
            raise UsageError(f"unknown keys in {path}: {', '.join(sorted(unknown))}")
    values.update(overrides or {})
    values.update({k: v for k, v in extra.items() if v is not None})
    for key in ("beta_values_db", "N_values", "modes"):
        if isinstance(values.get(key), list):
            values[key] = tuple(values[key])
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _progress(done, total):
    print(f"\r{done}/{total} work units", end="" if done < total else "\n", file=sys.stderr,
          flush=True)


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        config = load_config(args.config_path, args.overrides, sweep=args.sweep,
                             base_seed=args.seed, num_drops=args.drops)
    except UsageError as exc:
        print(f"fdd2d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, tomllib.TOMLDecodeError) as exc:
        print(f"fdd2d: error: cannot read config {args.config_path}: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = run_sweep(config, progress=None if args.quiet else _progress)
    except ValueError as exc:  # e.g. a malformed FDD2D_THREADS
        print(f"fdd2d: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        paths = write_outputs(result, config, args.output_dir)
    except OSError as exc:
        print(f"fdd2d: error: cannot write results to {args.output_dir}: {exc}", file=sys.stderr)
        return EXIT_IO
    for w in warnings_for(result):
        print(f"warning: {w}", file=sys.stderr)
    if not args.quiet:
        for p in paths:
            print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
