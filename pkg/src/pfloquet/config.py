"""Experiment configuration files.

A configuration is an INI file with four sections::

    [driving]   kind, alpha, modes, decay, seed
    [system]    type (delay | parabolic), profile, grid, plus profile keys
    [run]       horizon, burn_in, tolerance, seed, samples, variant, ...
    [outputs]   directory, formats

Shipped presets live in the package as ``presets/<name>.ini``.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .driving import DrivingConfig
from .errors import ConfigurationError

SECTIONS = ("driving", "system", "run", "outputs")
SYSTEM_TYPES = ("delay", "parabolic")
VARIANT_CHOICES = ("OA3", "OA4", "both")
FORMATS = ("json", "csv")


@dataclass(frozen=True)
class SystemConfig:
    """System section: type, named profile, grid size and the remaining profile keys."""

    type: str
    profile: str
    grid: int
    params: dict = field(default_factory=dict)
    per_unit: int | None = None


@dataclass(frozen=True)
class RunConfig:
    horizon: int = 200
    burn_in: int | None = None
    tolerance: float = 1e-10
    seed: int = 0
    samples: int = 10
    variant: str = "OA3"
    pullback_depth: int = 200
    refresh: int = 10
    focusing_samples: int = 100
    duality_pairs: int = 100
    comparison_pairs: int = 50
    oracle_tolerance: float = 1e-3


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "results"
    formats: tuple = FORMATS


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    driving: DrivingConfig
    system: SystemConfig
    run: RunConfig
    outputs: OutputConfig


def _get(section, key, convert, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigurationError(f"missing key {key!r} in section [{section.name}]")
        return default
    raw = section[key].strip()
    try:
        return convert(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value {raw!r} for {section.name}.{key}: {exc}") from exc


def parse_floats(text: str) -> tuple[float, ...]:
    values = tuple(float(v) for v in text.replace(",", " ").split())
    if not values:
        raise ValueError("empty list")
    return values


def parse_matrix(text: str) -> list[list[float]]:
    """Matrix written row by row with ``;`` between rows, e.g. ``1 0; 0 1``."""
    rows = [parse_floats(r) for r in text.split(";") if r.strip()]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValueError("rows of unequal length")
    return [list(r) for r in rows]


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "auto", "none") else int(text)


def _positive(value, name):
    if not (value > 0 and math.isfinite(value)):
        raise ConfigurationError(f"{name} must be positive")
    return value


def parse_config(text: str, name: str = "config") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=name)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {name}: {exc}") from exc
    unknown = set(parser.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigurationError(f"unknown sections: {sorted(unknown)}")
    for sec in ("driving", "system"):
        if not parser.has_section(sec):
            raise ConfigurationError(f"missing section [{sec}]")
    for sec in ("run", "outputs"):
        if not parser.has_section(sec):
            parser.add_section(sec)

    d = parser["driving"]
    driving = DrivingConfig(
        kind=_get(d, "kind", str, "torus"),
        alpha=_get(d, "alpha", parse_floats, (1.0,)),
        modes=_get(d, "modes", int, 6),
        decay=_get(d, "decay", float, 0.6),
        seed=_get(d, "seed", int, 0),
    )

    s = parser["system"]
    kind = _get(s, "type", str, required=True)
    if kind not in SYSTEM_TYPES:
        raise ConfigurationError(f"system type must be one of {SYSTEM_TYPES}")
    grid = _get(s, "grid", int, 200 if kind == "delay" else 99)
    if grid < (8 if kind == "delay" else 2):
        raise ConfigurationError("grid too small")
    reserved = {"type", "profile", "grid", "per_unit"}
    system = SystemConfig(
        type=kind,
        profile=_get(s, "profile", str, "constant" if kind == "delay" else "heat"),
        grid=grid,
        params={k: v for k, v in s.items() if k not in reserved},
        per_unit=_get(s, "per_unit", _optional_int, None),
    )

    r = parser["run"]
    run = RunConfig(
        horizon=_get(r, "horizon", int, 200),
        burn_in=_get(r, "burn_in", _optional_int, None),
        tolerance=_get(r, "tolerance", float, 1e-10),
        seed=_get(r, "seed", int, 0),
        samples=_get(r, "samples", int, 10),
        variant=_get(r, "variant", str, "OA3"),
        pullback_depth=_get(r, "pullback_depth", int, 200),
        refresh=_get(r, "refresh", int, 10),
        focusing_samples=_get(r, "focusing_samples", int, 100),
        duality_pairs=_get(r, "duality_pairs", int, 100),
        comparison_pairs=_get(r, "comparison_pairs", int, 50),
        oracle_tolerance=_get(r, "oracle_tolerance", float, 1e-3),
    )
    if run.horizon < 2:
        raise ConfigurationError("horizon must be at least 2")
    if run.burn_in is not None and run.burn_in < 0:
        raise ConfigurationError("burn_in must be nonnegative")
    _positive(run.tolerance, "tolerance")
    _positive(run.oracle_tolerance, "oracle_tolerance")
    for key in ("samples", "pullback_depth", "refresh", "focusing_samples", "duality_pairs", "comparison_pairs"):
        if getattr(run, key) < 1:
            raise ConfigurationError(f"{key} must be at least 1")
    if run.variant not in VARIANT_CHOICES:
        raise ConfigurationError(f"variant must be one of {VARIANT_CHOICES}")

    o = parser["outputs"]
    formats = tuple(f.strip() for f in _get(o, "formats", str, "json, csv").split(",") if f.strip())
    if not set(formats) <= set(FORMATS) or "json" not in formats:
        raise ConfigurationError(f"formats must include json and be drawn from {FORMATS}")
    outputs = OutputConfig(directory=_get(o, "directory", str, "results"), formats=formats)
    return ExperimentConfig(name, driving, system, run, outputs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file {path} not found") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, path.stem)


def preset_names() -> list[str]:
    folder = resources.files("pfloquet") / "presets"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def preset_text(name: str) -> str:
    if name not in preset_names():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return (resources.files("pfloquet") / "presets" / f"{name}.ini").read_text(encoding="utf-8")


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name), name)
