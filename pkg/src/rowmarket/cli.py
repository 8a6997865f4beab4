"""Command-line front end: config parsing, scenario runs, CSV + manifest output.

Config files are flat `key = value` text; every key has a mirroring flag and
flags win over file values, which win over defaults. Unknown keys are errors.
Exit status: 0 success, 1 config error, 2 non-convergent dynamics.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .distributions import PopulationModel, QuantileSpec, fit_from_quantiles, lognormal_from_mean
from .experiments import (
    MECHANISM_LABELS,
    Route,
    Scenario,
    ScenarioConfig,
    run_scenario,
)

__all__ = ["ConfigError", "RunManifest", "parse_config", "run", "main"]

COMMANDS = ("honest", "abandonment", "dishonest", "all")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _parse_route(text: str) -> Route:
    try:
        return Route(text)
    except ValueError:
        raise ConfigError(f"route must be one of mc, quad, both; got {text!r}") from None


def _parse_mechanisms(text: str) -> tuple[str, ...]:
    if not text:
        return ()
    labels = tuple(part.strip() for part in text.split(","))
    for label in labels:
        if label not in MECHANISM_LABELS:
            raise ConfigError(
                f"mechanisms contains unknown label {label!r}; known: {', '.join(MECHANISM_LABELS)}"
            )
    return labels


# key -> (type converter, default or None if required, validator or None)
SCHEMA: dict[str, tuple] = {
    "seed": (int, None, lambda v: v >= 0),
    "vot_median": (float, 0.8, lambda v: v > 0),
    "vot_lower_quartile": (float, 0.6, lambda v: v > 0),
    "vot_upper_quartile": (float, 1.2, lambda v: v > 0),
    "time_mean": (float, 2.0, lambda v: v > 0),
    "time_sigma": (float, 0.95, lambda v: v > 0),
    "p_priority_a": (float, 0.5, lambda v: 0.0 <= v <= 1.0),
    "credit_loss_rate": (float, 0.10, lambda v: 0.0 <= v < 1.0),
    "mechanisms": (str, "", None),
    "grid": (int, 101, lambda v: v >= 3),
    "samples": (int, 100_000, lambda v: v >= 1000),
    "route": (str, "quad", lambda v: v in ("mc", "quad", "both")),
    "quad_nodes": (int, 128, lambda v: v >= 64),
    "dynamics_quad_nodes": (int, 64, lambda v: v >= 32),
    "damping": (float, 0.5, lambda v: 0.0 < v <= 1.0),
    "max_iter": (int, 200, lambda v: v >= 1),
    "outdir": (str, "runs", None),
}


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility sidecar for one run."""

    config_digest: str
    seed: int
    tool_version: str
    started: str
    finished: str


def _convert(key: str, raw: str):
    typ, _, validator = SCHEMA[key]
    try:
        value = typ(raw)
    except ValueError:
        raise ConfigError(f"field {key!r}: cannot parse {raw!r} as {typ.__name__}") from None
    if validator is not None and not validator(value):
        raise ConfigError(f"field {key!r}: value {value!r} out of range")
    return value


def _read_config_file(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = _convert(key, raw.strip())
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rowmarket",
        description="Per-VOT benefit curves for intersection right-of-way market mechanisms.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, default=None, help="flat key = value config file")
    flags = [
        ("--seed", int),
        ("--vot-median", float),
        ("--vot-lower-quartile", float),
        ("--vot-upper-quartile", float),
        ("--time-mean", float),
        ("--time-sigma", float),
        ("--p-priority-a", float),
        ("--credit-loss-rate", float),
        ("--mechanisms", str),
        ("--grid", int),
        ("--samples", int),
        ("--route", str),
        ("--quad-nodes", int),
        ("--dynamics-quad-nodes", int),
        ("--damping", float),
        ("--max-iter", int),
        ("--outdir", str),
    ]
    for flag, typ in flags:
        parser.add_argument(flag, type=str, default=None, metavar=typ.__name__.upper())
    return parser


def parse_config(args: argparse.Namespace) -> tuple[dict, PopulationModel]:
    """Resolve defaults <- file <- flags into a full config dict.

    Raises ConfigError on unknown keys, malformed or out-of-range values, or
    a missing seed.
    """
    resolved = {key: default for key, (_, default, _) in SCHEMA.items()}
    if args.config is not None:
        resolved.update(_read_config_file(Path(args.config)))
    for key in SCHEMA:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = _convert(key, str(flag_value))

    if resolved["seed"] is None:
        raise ConfigError("field 'seed': required (set it in the config file or via --seed)")
    if not resolved["vot_lower_quartile"] < resolved["vot_median"] < resolved["vot_upper_quartile"]:
        raise ConfigError(
            "fields vot_lower_quartile < vot_median < vot_upper_quartile must be ordered, got "
            f"{resolved['vot_lower_quartile']}, {resolved['vot_median']}, {resolved['vot_upper_quartile']}"
        )
    _parse_mechanisms(resolved["mechanisms"])

    population = PopulationModel(
        vot=fit_from_quantiles(
            QuantileSpec(
                median=resolved["vot_median"],
                lower_quartile=resolved["vot_lower_quartile"],
                upper_quartile=resolved["vot_upper_quartile"],
            )
        ),
        time_saving=lognormal_from_mean(resolved["time_mean"], resolved["time_sigma"]),
    )
    return resolved, population


def config_digest(resolved: dict) -> str:
    canonical = "\n".join(f"{key} = {resolved[key]!r}" for key in sorted(resolved))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _mechanism_set_digest(labels: tuple[str, ...]) -> str:
    return hashlib.sha256(",".join(labels).encode()).hexdigest()[:8]


def _scenario_config(resolved: dict, scenario: Scenario) -> ScenarioConfig:
    return ScenarioConfig(
        scenario=scenario,
        seed=resolved["seed"],
        mechanisms=_parse_mechanisms(resolved["mechanisms"]),
        vot_curve_grid=resolved["grid"],
        n_samples=resolved["samples"],
        numeric_route=_parse_route(resolved["route"]),
        p_priority_a=resolved["p_priority_a"],
        credit_loss_rate=resolved["credit_loss_rate"],
        quad_nodes=resolved["quad_nodes"],
        dynamics_quad_nodes=resolved["dynamics_quad_nodes"],
        damping=resolved["damping"],
        max_iter=resolved["max_iter"],
    )


def _write_csv(path: Path, table) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(table.columns)
        cols = [table.data[name] for name in table.columns]
        for i in range(table.n_rows):
            writer.writerow(["%.12g" % col[i] for col in cols])


def run(command: str, resolved: dict, population: PopulationModel) -> int:
    """Run the requested scenarios; write CSVs plus one manifest per run."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    scenarios = list(Scenario) if command == "all" else [Scenario(command)]
    outdir = Path(resolved["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)

    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    outputs = []
    statuses = {}
    failed = False
    for scenario in scenarios:
        config = _scenario_config(resolved, scenario)
        result = run_scenario(config, population)
        name = f"{scenario.value}_{_mechanism_set_digest(config.mechanisms)}.csv"
        _write_csv(outdir / name, result.table)
        outputs.append(name)
        statuses[scenario.value] = {
            "csv": name,
            "mechanisms": list(config.mechanisms),
            "summaries": result.summaries,
            "failures": result.failures,
        }
        if result.failures:
            failed = True
            for label, message in result.failures.items():
                print(f"rowmarket: {scenario.value}/{label}: {message}", file=sys.stderr)

    finished = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    manifest = {
        "config_digest": config_digest(resolved),
        "seed": resolved["seed"],
        "tool_version": __version__,
        "started": started,
        "finished": finished,
        "command": command,
        "resolved_config": {key: resolved[key] for key in sorted(resolved)},
        "outputs": outputs,
        "scenarios": statuses,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 2 if failed else 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    # argparse turns --vot-median into vot_median, matching schema keys
    try:
        resolved, population = parse_config(args)
        return run(args.command, resolved, population)
    except ConfigError as exc:
        print(f"rowmarket: config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
