"""
The pipeline configuration, read from an INI file.

Sections and their defaults::

    [system]        m0, inclination, G, mass_unit, resonance = 3:1
    [planet.<name>] mass, a, e, omega, mean_anomaly (two sections, inner planet first)
    [caps]          secular_degree, kepler_degree, fourier, grid, method, sqrt_degree, action_degree,
                    kolmogorov_fourier
    [birkhoff]      steps, divisor_floor, intermediate_steps
    [adapt]         periods, samples_per_period
    [kolmogorov]    steps, ledger_steps, order_cap, divisor_floor, carry_frequency_shift
    [calibrate]     tol, max_iter, target, periods, samples_per_period
    [converge]      r_i, r_ii, tau, cutoff, threshold, check_steps
    [dynamics]      full_span, full_step, sample_every, slow_periods, samples_per_period

Without ``[planet.*]`` sections the HD60532 system is used.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from ._json import JsonObject
from .birkhoff import BirkhoffOptions
from .converge import ConvergeOptions
from .dynamics import DynamicsOptions
from .hambuild import ExpansionCaps, OrbitalConfig, Planet
from .kolmogorov import KolmogorovOptions

__all__ = (
    "SeriesCaps",
    "AdaptOptions",
    "CalibrateOptions",
    "CertifyOptions",
    "PipelineConfig",
    "load_config",
    "parse_config",
    "parse_overrides",
)

SECTIONS = (
    "system",
    "caps",
    "birkhoff",
    "adapt",
    "kolmogorov",
    "calibrate",
    "converge",
    "dynamics",
)
HASHED_SECTIONS = (
    "system",
    "expansion",
    "series",
    "birkhoff",
    "adapt",
    "kolmogorov",
    "calibrate",
    "converge",
    "dynamics",
)
PLANET_PREFIX = "planet."
PLANET_FIELDS = ("mass", "a", "e", "omega", "mean_anomaly")


@dataclass(frozen=True)
class SeriesCaps:
    """
    Truncations of the series built after the expansion.

    Args:
        sqrt_degree: Degree cap of the ``(√J, ϑ)`` series.
        action_degree: Action cap of the ``(p, q)`` series.
        kolmogorov_fourier: Fourier cap of the ``(p, q)`` series.
    """

    sqrt_degree: int = 8
    action_degree: int = 2
    kolmogorov_fourier: int = 12

    def __post_init__(self):
        assert self.sqrt_degree >= 2, "sqrt_degree must be at least 2."
        assert self.action_degree >= 1, "action_degree must be positive."
        assert self.kolmogorov_fourier >= 0, "kolmogorov_fourier must be non-negative."


@dataclass(frozen=True)
class AdaptOptions:
    periods: float = 32.0
    samples_per_period: int = 128

    def __post_init__(self):
        assert self.periods > 1, "periods must exceed one."
        assert self.samples_per_period > 8, "samples_per_period must exceed 8."


@dataclass(frozen=True)
class CalibrateOptions:
    """
    Args:
        tol: Tolerance on ``|ω₁ - ω₁*|``.
        max_iter: Largest number of Newton updates.
        target: ``ω₁*``; measured on the flow of the diagonal Hamiltonian when omitted.
        periods: Slow periods integrated to measure ``ω₁*``.
        samples_per_period: Samples per slow period of that integration.
    """

    tol: float = 1e-12
    max_iter: int = 10
    target: Optional[float] = None
    periods: float = 32.0
    samples_per_period: int = 128

    def __post_init__(self):
        assert self.tol > 0, "tol must be positive."
        assert self.max_iter >= 1, "max_iter must be positive."


@dataclass(frozen=True)
class CertifyOptions:
    """
    ``ConvergeOptions`` with the number of steps checked against the bounds.
    """

    converge: ConvergeOptions = field(default_factory=ConvergeOptions)
    check_steps: int = 3

    def __post_init__(self):
        assert self.check_steps >= 0, "check_steps must be non-negative."


@dataclass(frozen=True)
class PipelineConfig:
    system: OrbitalConfig = field(default_factory=OrbitalConfig.hd60532)
    expansion: ExpansionCaps = field(default_factory=ExpansionCaps)
    series: SeriesCaps = field(default_factory=SeriesCaps)
    birkhoff: BirkhoffOptions = field(default_factory=BirkhoffOptions)
    adapt: AdaptOptions = field(default_factory=AdaptOptions)
    kolmogorov: KolmogorovOptions = field(default_factory=KolmogorovOptions)
    ledger_steps: int = 9
    calibrate: CalibrateOptions = field(default_factory=CalibrateOptions)
    certify: CertifyOptions = field(default_factory=CertifyOptions)
    dynamics: DynamicsOptions = field(default_factory=DynamicsOptions)

    def __post_init__(self):
        assert self.ledger_steps >= self.kolmogorov.steps, "ledger_steps must not be below the Kolmogorov steps."

    def section(self, name: str) -> JsonObject:
        """
        Returns the JSON view of one section; stage keys hash these views.
        """
        match name:
            case "system":
                return dataclasses.asdict(self.system)
            case "expansion":
                return dataclasses.asdict(self.expansion)
            case "series":
                return dataclasses.asdict(self.series)
            case "birkhoff":
                return dataclasses.asdict(self.birkhoff)
            case "adapt":
                return dataclasses.asdict(self.adapt)
            case "kolmogorov":
                return {**dataclasses.asdict(self.kolmogorov), "ledger_steps": self.ledger_steps}
            case "calibrate":
                return dataclasses.asdict(self.calibrate)
            case "converge":
                return {**dataclasses.asdict(self.certify.converge), "check_steps": self.certify.check_steps}
            case "dynamics":
                return dataclasses.asdict(self.dynamics)
            case _:
                raise ValueError(f"{name} is not a valid value")

    def as_dict(self) -> JsonObject:
        return {name: self.section(name) for name in HASHED_SECTIONS}

    def with_caps(self, overrides: Mapping[str, str]) -> PipelineConfig:
        """
        Returns a copy with entries of ``[caps]`` replaced.
        """
        expansion, series = _split_caps(overrides, self.expansion, self.series)
        return dataclasses.replace(self, expansion=expansion, series=series)

    def with_steps(self, stage: str, steps: int) -> PipelineConfig:
        """
        Returns a copy with the step count of ``stage`` replaced.
        """
        match stage:
            case "birkhoff":
                return dataclasses.replace(self, birkhoff=dataclasses.replace(self.birkhoff, steps=steps))
            case "kolmogorov" | "calibrate":
                kolmogorov = dataclasses.replace(self.kolmogorov, steps=steps)
                return dataclasses.replace(self, kolmogorov=kolmogorov, ledger_steps=max(self.ledger_steps, steps))
            case "certify":
                converge = dataclasses.replace(self.certify.converge, r_i=steps)
                return dataclasses.replace(self, certify=dataclasses.replace(self.certify, converge=converge))
            case _:
                raise ValueError(f"--steps does not apply to stage {stage}.")


def _convert(default: Any, raw: str, name: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered not in configparser.ConfigParser.BOOLEAN_STATES:
                raise ValueError(raw)
            return configparser.ConfigParser.BOOLEAN_STATES[lowered]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, str):
            return raw
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} = {raw} is not a valid value") from None


def _options(cls, section: Mapping[str, str], name: str, base: Any = None, **extra) -> Any:
    base = base if base is not None else cls()
    fields = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    changes = dict(extra)
    for key, raw in section.items():
        if key not in fields:
            raise ValueError(f"{name}.{key} is not a valid value")
        default = getattr(base, key)
        if default is None:
            # optional fields take the type they are annotated with
            default = 0 if "int" in fields[key] else 0.0
        changes[key] = _convert(default, raw, f"{name}.{key}")
    return dataclasses.replace(base, **changes)


def _split_caps(items: Mapping[str, str], expansion: ExpansionCaps, series: SeriesCaps):
    expansion_keys = {f.name for f in dataclasses.fields(ExpansionCaps)}
    series_keys = {f.name for f in dataclasses.fields(SeriesCaps)}
    unknown = set(items) - expansion_keys - series_keys
    if unknown:
        raise ValueError(f"caps.{sorted(unknown)[0]} is not a valid value")
    expansion = _options(ExpansionCaps, {k: v for k, v in items.items() if k in expansion_keys}, "caps", expansion)
    series = _options(SeriesCaps, {k: v for k, v in items.items() if k in series_keys}, "caps", series)
    return expansion, series


def _system(parser: configparser.ConfigParser) -> OrbitalConfig:
    default = OrbitalConfig.hd60532()
    planets = []
    for name in parser.sections():
        if not name.startswith(PLANET_PREFIX):
            continue
        section = parser[name]
        missing = [key for key in PLANET_FIELDS if key not in section]
        if missing:
            raise ValueError(f"{name}.{missing[0]} must be specified.")
        extra = set(section) - set(PLANET_FIELDS)
        if extra:
            raise ValueError(f"{name}.{sorted(extra)[0]} is not a valid value")
        values = {key: _convert(0.0, section[key], f"{name}.{key}") for key in PLANET_FIELDS}
        planets.append(Planet(name[len(PLANET_PREFIX) :], **values))
    if planets and len(planets) != 2:
        raise ValueError(f"{len(planets)} planets is not a valid value")
    system = dict(parser["system"]) if parser.has_section("system") else {}
    resonance = default.resonance
    if "resonance" in system:
        p, _, q = system.pop("resonance").partition(":")
        try:
            resonance = (int(p), int(q))
        except ValueError:
            raise ValueError("system.resonance is not a valid value") from None
    changes = {
        key: _convert(getattr(default, key), raw, f"system.{key}")
        for key, raw in system.items()
        if key in ("m0", "inclination", "G", "mass_unit")
    }
    unknown = set(system) - set(changes)
    if unknown:
        raise ValueError(f"system.{sorted(unknown)[0]} is not a valid value")
    return default.replace(planets=tuple(planets) or default.planets, resonance=resonance, **changes)


def parse_config(text: str) -> PipelineConfig:
    """
    Parses the INI text of a pipeline configuration.

    Raises:
        ValueError: When a section or a key is unknown, or a value does not parse.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser.read_string(text)
    for name in parser.sections():
        if name not in SECTIONS and not name.startswith(PLANET_PREFIX):
            raise ValueError(f"[{name}] is not a valid value")

    def section(name: str) -> Dict[str, str]:
        return dict(parser[name]) if parser.has_section(name) else {}

    expansion, series = _split_caps(section("caps"), ExpansionCaps(), SeriesCaps())
    kolmogorov = section("kolmogorov")
    ledger_steps = int(kolmogorov.pop("ledger_steps", PipelineConfig.ledger_steps))
    converge = section("converge")
    check_steps = int(converge.pop("check_steps", CertifyOptions.check_steps))
    return PipelineConfig(
        system=_system(parser),
        expansion=expansion,
        series=series,
        birkhoff=_options(BirkhoffOptions, section("birkhoff"), "birkhoff"),
        adapt=_options(AdaptOptions, section("adapt"), "adapt"),
        kolmogorov=_options(KolmogorovOptions, kolmogorov, "kolmogorov"),
        ledger_steps=ledger_steps,
        calibrate=_options(CalibrateOptions, section("calibrate"), "calibrate"),
        certify=CertifyOptions(_options(ConvergeOptions, converge, "converge"), check_steps),
        dynamics=_options(DynamicsOptions, section("dynamics"), "dynamics"),
    )


def load_config(path: Union[str, Path]) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def parse_overrides(text: Optional[str]) -> Dict[str, str]:
    """
    Parses ``key=value,key=value``.
    """
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{item} is not a valid value")
        out[key.strip()] = value.strip()
    return out
