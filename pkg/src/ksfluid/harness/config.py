"""Scenario configuration and the flat ``key = value`` config grammar.

Grammar, one entry per line::

    # comment (also allowed after a value)
    key = value
    key = 1.0, 2.0, 3.0      # lists are comma separated

Keys are the field names of :class:`ScenarioConfig`. Booleans accept
true/false/yes/no/on/off/1/0. ``mass`` also accepts a multiple of pi
written as ``4pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, get_type_hints

from ..functionals import CRITICAL_MASS, regime_of

REGIMES = ("subcritical", "critical", "supercritical")
DEFAULT_MASS = {"subcritical": 4 * math.pi, "critical": CRITICAL_MASS,
                "supercritical": 16 * math.pi}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    regime: str = "subcritical"
    mass: Optional[float] = None
    L: float = 12.0
    n: int = 128
    sigma: float = 1.0
    center: tuple = (0.0, 0.0)
    velocity: tuple = (0.0, 0.0)
    cfl: float = 0.4
    dt_min: float = 1e-10
    t_end: float = 5.0
    sample_interval: float = 0.05
    snapshot_times: tuple = ()
    output_dir: Optional[str] = None
    seed: int = 0
    solver: str = "fft"
    limited: bool = True
    blowup_rho_ratio: float = 1e3
    blowup_tail: int = 5
    # particles
    particles: bool = False
    n_particles: int = 4000
    particle_mass: Optional[float] = None
    particle_dt: float = 0.01
    particle_counts: tuple = (1000, 4000, 16000)
    replicas: int = 4
    # sweep
    sweep_masses: tuple = (4 * math.pi, 6 * math.pi, 8 * math.pi, 10 * math.pi, 16 * math.pi)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if self.mass is None:
            object.__setattr__(self, "mass", DEFAULT_MASS[self.regime])
        if not self.mass > 0:
            raise ConfigError("mass must be positive")
        if regime_of(self.mass) != self.regime:
            raise ConfigError(f"mass {self.mass:.6g} is {regime_of(self.mass)}, "
                              f"not {self.regime} (critical mass 8pi = {CRITICAL_MASS:.6g})")
        for name in ("L", "sigma", "t_end", "sample_interval", "dt_min", "particle_dt",
                     "blowup_rho_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.cfl <= 0.9:
            raise ConfigError("cfl must lie in (0, 0.9]")
        if self.n < 8 or self.n % 2:
            raise ConfigError("n must be even and >= 8")
        if self.solver not in ("fft", "direct"):
            raise ConfigError("solver must be 'fft' or 'direct'")
        if self.n_particles < 2 or self.replicas < 1 or self.blowup_tail < 2:
            raise ConfigError("n_particles >= 2, replicas >= 1 and blowup_tail >= 2 required")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        for name in ("center", "velocity"):
            if len(getattr(self, name)) != 2:
                raise ConfigError(f"{name} needs two components")

    @classmethod
    def for_regime(cls, regime: str, **overrides) -> "ScenarioConfig":
        base = dict(DEFAULTS_BY_REGIME.get(regime, {}))
        base.update(overrides)
        return cls(regime=regime, **base)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "mass" in kw and "regime" not in kw:
            kw["regime"] = regime_of(kw["mass"])
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULTS_BY_REGIME = {
    "subcritical": dict(L=16.0, n=128, t_end=5.0),
    "critical": dict(L=16.0, n=128, t_end=5.0),
    "supercritical": dict(L=8.0, n=128, t_end=3.0),
}


def parse_value(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return parse_number(text)
    if kind is tuple:
        if not text:
            return ()
        return tuple(parse_number(p) for p in text.split(","))
    if kind is str:
        return text
    raise ConfigError(f"unsupported type {kind}")


def parse_number(text: str) -> float:
    text = text.strip().replace(" ", "")
    if text.endswith("pi"):
        head = text[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(text)


def _field_kinds() -> dict:
    hints = get_type_hints(ScenarioConfig)
    kinds = {}
    for name, hint in hints.items():
        s = str(hint)
        for k in (bool, int, float, tuple, str):
            if hint is k or k.__name__ in s:
                kinds[name] = k
                break
    return kinds


def parse_config_text(text: str) -> dict:
    kinds = _field_kinds()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in kinds:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            val = parse_value(value, kinds[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        if key in ("n", "seed", "n_particles", "replicas", "blowup_tail"):
            val = int(val)
        if key == "particle_counts":
            val = tuple(int(v) for v in val)
        out[key] = val
    return out


def load_config(path) -> ScenarioConfig:
    values = parse_config_text(Path(path).read_text())
    regime = values.pop("regime", None)
    if regime is None:
        regime = regime_of(values["mass"]) if "mass" in values else "subcritical"
    return ScenarioConfig.for_regime(regime, **values)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for name, value in cfg.as_dict().items():
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
