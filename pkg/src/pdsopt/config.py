"""Run configuration: case presets and the YAML file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .anneal import AnnealConfig
from .devmap import DevObjectiveConfig
from .errors import ConfigError
from .fem import ShellMaterial
from .grid import PRESETS, BaseSurfaceSpec, CasePreset, load_layout
from .nlp import LOWER_LEVEL_HALF_RANGE, UPPER_LEVEL_HALF_RANGE, NlpSettings


@dataclass(frozen=True)
class SurfaceSection:
    nu: int = 21
    nv: int = 21
    Lx: float = 10.0
    Ly: float = 10.0
    h: float = 2.0
    jitter: float = 0.015
    family: str = "dome"


@dataclass(frozen=True)
class ObjectiveSection:
    c: float = 100.0
    eps: float = 1e-6


@dataclass(frozen=True)
class BoundsSection:
    lower_half_range: float = LOWER_LEVEL_HALF_RANGE
    upper_half_range: float = UPPER_LEVEL_HALF_RANGE


@dataclass(frozen=True)
class MaterialSection:
    E: float = 20e6  # kN/m^2
    nu: float = 0.2
    t: float = 0.1  # m
    q: float = 1.0  # kN/m^2
    load_per: str = "surface"


@dataclass(frozen=True)
class NlpSection:
    gtol: float = 1e-6
    ftol: float = 1e-10
    max_iter: int = 2000
    memory: int = 20


@dataclass(frozen=True)
class AnnealSection:
    steps: int = 100
    moves: int = 10
    T0: float | None = None
    alpha: float = 0.95
    sigma0: float = 0.2
    local_search: bool = True
    polish_budget: int = 50


_SECTIONS = {
    "surface": SurfaceSection,
    "objective": ObjectiveSection,
    "bounds": BoundsSection,
    "material": MaterialSection,
    "nlp": NlpSection,
    "anneal": AnnealSection,
}


@dataclass(frozen=True)
class CaseConfig:
    """Complete description of one run. Defaults reproduce the square-plan case."""

    case: str = "case1"  # preset name or path to a layout file
    seed: int = 0
    out: str = "out"
    threads: int | None = None
    surface: SurfaceSection = field(default_factory=SurfaceSection)
    objective: ObjectiveSection = field(default_factory=ObjectiveSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    material: MaterialSection = field(default_factory=MaterialSection)
    nlp: NlpSection = field(default_factory=NlpSection)
    anneal: AnnealSection = field(default_factory=AnnealSection)

    # derived objects, each validating itself
    def surface_spec(self) -> BaseSurfaceSpec:
        s = self.surface
        return BaseSurfaceSpec(s.nu, s.nv, s.Lx, s.Ly, s.h, s.jitter, self.seed, s.family)

    def dev_config(self) -> DevObjectiveConfig:
        return DevObjectiveConfig(c=self.objective.c, eps=self.objective.eps)

    def nlp_settings(self) -> NlpSettings:
        n = self.nlp
        return NlpSettings(gtol=n.gtol, ftol=n.ftol, max_iter=n.max_iter, memory=n.memory)

    def shell_material(self) -> ShellMaterial:
        return ShellMaterial(self.material.E, self.material.nu, self.material.t)

    def anneal_config(self) -> AnnealConfig:
        a = self.anneal
        return AnnealConfig(steps=a.steps, moves=a.moves, T0=a.T0, alpha=a.alpha, sigma0=a.sigma0,
                            seed=self.seed, local_search=a.local_search, polish_budget=a.polish_budget)

    def layout(self) -> CasePreset:
        if self.case in PRESETS:
            return PRESETS[self.case]
        path = Path(self.case)
        if not path.is_file():
            raise ConfigError(f"unknown case {self.case!r}: neither a preset ({', '.join(PRESETS)}) nor a layout file")
        return load_layout(path)

    def validate(self) -> "CaseConfig":
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.bounds.lower_half_range <= 0 or self.bounds.upper_half_range <= 0:
            raise ConfigError("bound half ranges must be positive")
        if self.material.q < 0:
            raise ConfigError("load must be non-negative")
        if self.material.load_per not in ("surface", "plan"):
            raise ConfigError("load_per must be 'surface' or 'plan'")
        self.surface_spec().validate()
        self.dev_config()
        self.nlp_settings()
        self.shell_material()
        self.anneal_config()
        self.layout()
        return self

    def replace(self, **changes) -> "CaseConfig":
        """Copy with top-level fields or ``section__key`` entries replaced."""
        top, nested = {}, {}
        for k, v in changes.items():
            if "__" in k:
                sec, key = k.split("__", 1)
                nested.setdefault(sec, {})[key] = v
            else:
                top[k] = v
        for sec, vals in nested.items():
            top[sec] = dataclasses.replace(getattr(self, sec), **vals)
        return dataclasses.replace(self, **top)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


CASE_DEFAULTS = {
    "case1": CaseConfig(),
    "case2": CaseConfig(
        case="case2",
        surface=SurfaceSection(nu=21, nv=11, Lx=10.0, Ly=5.0, h=1.0, jitter=0.01),
        objective=ObjectiveSection(c=10.0),
    ),
}


def default_config(case: str = "case1") -> CaseConfig:
    return CASE_DEFAULTS.get(case, dataclasses.replace(CaseConfig(), case=case))


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in section {name!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"section {name!r}: {exc}") from None


def config_from_dict(data: dict) -> CaseConfig:
    """Build a config; missing entries take the defaults of the named case."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = set(data) - {f.name for f in fields(CaseConfig)}
    if unknown:
        raise ConfigError(f"unknown configuration key(s): {sorted(unknown)}")
    base = default_config(str(data.get("case", "case1")))
    top = {k: v for k, v in data.items() if k not in _SECTIONS}
    for name, cls in _SECTIONS.items():
        if name in data:
            merged = {**dataclasses.asdict(getattr(base, name)), **(data[name] or {})}
            top[name] = _section(cls, merged, name)
    try:
        return dataclasses.replace(base, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> CaseConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return config_from_dict(data or {})


def dump_config(config: CaseConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(config.to_dict(), sort_keys=False))
