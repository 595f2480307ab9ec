"""Command-line front end: flat key=value configs, experiment dispatch,
deterministic CSV emission, and the validation / oracle-check subcommands.

Config schema (one ``key = value`` per line, ``#`` comments allowed)::

    T = 8                     # required
    N_list = 10, 50, 100      # default: 100
    snr_db_list = -16, -14    # default: -16 .. -6 step 2; 'inf' = noiseless
    trials = 2000             # default: 1000
    constellation = 4-QAM     # default: 4-QAM (or BPSK)
    radius_r_squared = 1.0    # default: T/8
    failure_policy = set_infinite   # or: double
    detectors = ML, MMSE-Iter # default: ML
    seed = 0                  # default: 0; SIMODEC_SEED overrides
    strict_iterations = false # default: false

Re-running a command with the same config overwrites its outputs with
byte-identical files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .experiments import (
    ComplexityTable,
    DETECTORS,
    ExperimentConfig,
    SerTable,
    oracle_check,
    run_complexity,
    run_ser_sweep,
    validate_asymptotics,
)
from .model import get_constellation

__all__ = [
    "ConfigError",
    "RunManifest",
    "parse_config",
    "serialize_config",
    "emit_results",
    "main",
]

_KEYS = (
    "T",
    "N_list",
    "snr_db_list",
    "trials",
    "constellation",
    "radius_r_squared",
    "failure_policy",
    "detectors",
    "seed",
    "strict_iterations",
)


class ConfigError(ValueError):
    """Malformed configuration, with a line-level diagnostic."""

    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")


def _parse_float(text: str) -> float:
    if text.strip().lower() in ("inf", "+inf"):
        return math.inf
    return float(text)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_config(path) -> ExperimentConfig:
    """Parse a flat key=value config file into an :class:`ExperimentConfig`."""
    path = Path(path)
    raw: dict[str, object] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(path, line_no, f"expected 'key = value', got {line.strip()!r}")
        key, _, value = (t.strip() for t in stripped.partition("="))
        if key not in _KEYS:
            raise ConfigError(path, line_no, f"unknown key {key!r}")
        if key in raw:
            raise ConfigError(path, line_no, f"duplicate key {key!r}")
        try:
            if key == "T" or key == "trials" or key == "seed":
                raw[key] = int(value)
            elif key == "N_list":
                raw[key] = tuple(int(v) for v in value.split(","))
            elif key == "snr_db_list":
                raw[key] = tuple(_parse_float(v) for v in value.split(","))
            elif key == "radius_r_squared":
                raw[key] = float(value)
            elif key == "failure_policy":
                raw[key] = value
            elif key == "constellation":
                get_constellation(value)  # reject unknown names early
                raw[key] = value
            elif key == "detectors":
                dets = tuple(v.strip() for v in value.split(","))
                for d in dets:
                    if d not in DETECTORS:
                        raise ValueError(f"unknown detector {d!r}; available: {DETECTORS}")
                raw[key] = dets
            elif key == "strict_iterations":
                raw[key] = _parse_bool(value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(path, line_no, f"bad value for {key!r}: {exc}") from None
    if "T" not in raw:
        raise ConfigError(path, 0, "missing required key 'T'")
    try:
        config = ExperimentConfig(**raw)  # type: ignore[arg-type]
    except ValueError as exc:
        raise ConfigError(path, 0, str(exc)) from None
    if config.r_squared >= config.T / 2:
        warnings.warn(
            f"radius_r_squared = {config.r_squared:g} is >= T/2 = {config.T / 2:g}; "
            "the constant-radius complexity guarantee assumes r^2 < T/2",
            RuntimeWarning,
            stacklevel=2,
        )
    return config


def serialize_config(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (re-parsing yields an equal config)."""
    lines = [
        f"T = {config.T}",
        "N_list = " + ", ".join(str(n) for n in config.N_list),
        "snr_db_list = " + ", ".join(f"{s:g}" for s in config.snr_db_list),
        f"trials = {config.trials}",
        f"constellation = {config.constellation}",
    ]
    if config.radius_r_squared is not None:
        lines.append(f"radius_r_squared = {config.radius_r_squared:g}")
    lines += [
        f"failure_policy = {config.failure_policy}",
        "detectors = " + ", ".join(config.detectors),
        f"seed = {config.seed}",
        f"strict_iterations = {str(config.strict_iterations).lower()}",
    ]
    return "\n".join(lines) + "\n"


@dataclasses.dataclass
class RunManifest:
    config_path: str
    output_dir: str
    command: str
    emitted_files: list[str]
    wall_time: float


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def emit_results(table: SerTable | ComplexityTable, output_dir) -> list[Path]:
    """Write the table as CSV (10 significant digits, LF, UTF-8) plus a
    manifest sidecar echoing the config, so figures regenerate from the CSV
    alone.  Identical tables produce byte-identical files."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(table, SerTable):
        name = "ser"
        header = "detector,N,snr_db,symbols_tested,symbol_errors,ser,stderr"
        lines = [
            ",".join(
                (
                    r.detector,
                    str(r.N),
                    _fmt(r.snr_db),
                    str(r.symbols_tested),
                    str(r.symbol_errors),
                    _fmt(r.ser),
                    _fmt(r.stderr),
                )
            )
            for r in table.rows
        ]
    else:
        name = "complexity"
        header = "N,snr_db,layer,mean_visited,max_visited,restart_rate"
        lines = [
            ",".join(
                (
                    str(r.N),
                    _fmt(r.snr_db),
                    str(r.layer),
                    _fmt(r.mean_visited),
                    str(r.max_visited),
                    _fmt(r.restart_rate),
                )
            )
            for r in table.rows
        ]
    csv_path = output_dir / f"{name}.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(header + "\n")
        for line in lines:
            f.write(line + "\n")
    manifest_path = output_dir / f"{name}_manifest.json"
    manifest = {
        "version": __version__,
        "seed": table.config.seed,
        "config": serialize_config(table.config),
        "files": [csv_path.name],
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return [csv_path, manifest_path]


def _load_config(args) -> ExperimentConfig:
    config = parse_config(args.config)
    env_seed = os.environ.get("SIMODEC_SEED")
    if env_seed is not None:
        config = dataclasses.replace(config, seed=int(env_seed))
    return config


def _cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    config = _load_config(args)
    table = run_ser_sweep(config, parallelism=args.parallelism)
    files = emit_results(table, args.out)
    manifest = RunManifest(
        config_path=str(args.config),
        output_dir=str(args.out),
        command="simulate",
        emitted_files=[str(p) for p in files],
        wall_time=time.perf_counter() - t0,
    )
    for p in manifest.emitted_files:
        print(p)
    print(f"done in {manifest.wall_time:.1f}s")
    return 0


def _cmd_complexity(args) -> int:
    t0 = time.perf_counter()
    config = _load_config(args)
    table = run_complexity(config, parallelism=args.parallelism)
    files = emit_results(table, args.out)
    for p in files:
        print(p)
    print(f"done in {time.perf_counter() - t0:.1f}s")
    return 0


def _print_report(report) -> int:
    for check in report.checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}")
    return 0 if report.all_passed else 1


def _cmd_validate(args) -> int:
    report = validate_asymptotics(
        args.T,
        args.noise_var,
        get_constellation(args.constellation),
        seed=args.seed,
    )
    return _print_report(report)


def _cmd_oracle_check(args) -> int:
    report = oracle_check(trials=args.trials, seed=args.seed)
    return _print_report(report)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="simodec",
        description="Joint ML non-coherent detection for massive SIMO: "
        "simulation, complexity profiling, and validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for cmd, fn in (("simulate", _cmd_simulate), ("complexity", _cmd_complexity)):
        p = sub.add_parser(cmd, help=f"run the {cmd} sweep and emit CSV")
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--parallelism", type=int, default=1, help="worker count")
        p.set_defaults(fn=fn)

    p = sub.add_parser("validate", help="check the large-array closed forms")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--noise-var", dest="noise_var", type=float, required=True)
    p.add_argument("--constellation", default="4-QAM")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("oracle-check", help="sphere vs brute-force equivalence suite")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_oracle_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
