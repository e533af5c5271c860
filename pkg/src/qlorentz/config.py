"""Experiment configuration: one INI file, one dataclass per section.

Values are written back with ``repr`` for floats, so parse -> serialize ->
parse is the identity. Every default below is echoed into run manifests.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError


@dataclass
class RunSection:
    dim: int = 3
    seed: int = 0
    threads: int = 1
    out: str = "out"


@dataclass
class PotentialSection:
    family: str = "gaussian"
    width: float = 1.0
    amplitude: float = 1.0
    exponent: float = 6.0


@dataclass
class ScatteringSection:
    """Single-scatterer T-matrix at coupling ``mu`` and speed ``speed``."""

    speed: float = 1.0
    mu: float = 0.1
    method: str = "ls"
    l_max: int = 2
    n_polar: int = 12
    n_azimuth: int = 24
    n_radial: int = 24
    n_tail: int = 16
    nodes_per_panel: int = 8
    n_outer: int = 12
    epsilon: float = 0.1
    extrapolation_steps: int = 4
    tolerance: float = 1e-4
    tmatrix_file: str = ""


@dataclass
class CouplingSection:
    """Macroscopic coupling profile lambda(x)."""

    kind: str = "constant"
    lam_max: float = 0.05
    radius: float = 1.0


@dataclass
class SymbolSection:
    """Single Gaussian a(x, y); empty centres mean the origin."""

    amp: float = 1.0
    sx: float = 1.0
    sy: float = 1.0
    x0: tuple = ()
    y0: tuple = ()


@dataclass
class TransportSection:
    solver: str = "grid"
    geometry: str = "homogeneous"
    kernel: str = "first_born"
    t_final: float = 1.0
    n_times: int = 5
    dt: float = 0.05
    n_particles: int = 100000
    block_size: int = 8192
    n_polar: int = 8
    n_azimuth: int = 16
    n_speeds: int = 8
    speed_panels: int = 4
    k_max: float = 4.0
    n_x: int = 64
    period: float = 16.0
    n_lam: int = 9


@dataclass
class DuhamelSection:
    t: float = 1.0
    r_values: tuple = (0.1, 0.03, 0.01)
    alpha_values: tuple = (0.3, 0.1, 0.03)
    inner_radius: float = 0.5
    gain_speeds: tuple = (0.5, 1.0, 2.0)
    gain_width: float = 1.0
    gain_shift: float = 0.4
    gain_n_polar: int = 24
    gain_n_azimuth: int = 48


@dataclass
class VonNeumannSection:
    spacing: float = 0.2
    n_side: int = 29
    r: float = 0.5
    alpha: float = 0.2
    inner_radius: float = 0.5
    dt: float = 0.0125
    t_final: float = 1.0
    n_times: int = 11
    scatterer_file: str = ""
    hierarchy: bool = False
    rtol: float = 1e-6


@dataclass
class ScatterersSection:
    kind: str = "lattice"
    window_radius: float = 10.0
    intensity: float = 1.0
    hard_core_radius: float = 0.5
    max_shift: float = 0.2
    eps_values: tuple = (0.2, 0.1, 0.05)
    bump_radius: float = 1.0


SECTIONS = {
    "run": RunSection,
    "potential": PotentialSection,
    "scattering": ScatteringSection,
    "coupling": CouplingSection,
    "a": SymbolSection,
    "b": SymbolSection,
    "transport": TransportSection,
    "duhamel": DuhamelSection,
    "vn": VonNeumannSection,
    "scatterers": ScatterersSection,
}

CHOICES = {
    ("potential", "family"): ("gaussian", "bump"),
    ("scattering", "method"): ("ls", "born"),
    ("coupling", "kind"): ("constant", "bump", "zero"),
    ("transport", "solver"): ("grid", "mc"),
    ("transport", "geometry"): ("homogeneous", "slab"),
    ("transport", "kernel"): ("first_born", "ls", "none"),
    ("scatterers", "kind"): ("lattice", "matern", "displaced"),
}

POSITIVE = {
    ("potential", "width"), ("scattering", "speed"), ("scattering", "epsilon"),
    ("scattering", "tolerance"), ("coupling", "radius"), ("a", "sx"), ("a", "sy"),
    ("b", "sx"), ("b", "sy"), ("transport", "dt"), ("transport", "k_max"),
    ("transport", "period"), ("transport", "n_particles"), ("transport", "n_times"),
    ("duhamel", "gain_n_azimuth"), ("duhamel", "gain_width"), ("vn", "spacing"), ("vn", "r"), ("vn", "alpha"),
    ("vn", "dt"), ("vn", "rtol"), ("vn", "n_side"), ("vn", "n_times"),
    ("scatterers", "window_radius"), ("scatterers", "hard_core_radius"),
    ("scatterers", "bump_radius"), ("run", "threads"),
}


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _parse(kind, text: str, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return tuple(float(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot read {text!r} as {kind.__name__}", "cli") from None


def _field_kind(section_cls, name):
    default = {f.name: f for f in fields(section_cls)}[name]
    value = default.default if default.default is not dataclasses.MISSING else default.default_factory()
    return type(value)


@dataclass
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    potential: PotentialSection = field(default_factory=PotentialSection)
    scattering: ScatteringSection = field(default_factory=ScatteringSection)
    coupling: CouplingSection = field(default_factory=CouplingSection)
    a: SymbolSection = field(default_factory=SymbolSection)
    b: SymbolSection = field(default_factory=SymbolSection)
    transport: TransportSection = field(default_factory=TransportSection)
    duhamel: DuhamelSection = field(default_factory=DuhamelSection)
    vn: VonNeumannSection = field(default_factory=VonNeumannSection)
    scatterers: ScatterersSection = field(default_factory=ScatterersSection)
    base_dir: str = field(default=".", compare=False, repr=False)

    # text round trip --------------------------------------------------------

    @classmethod
    def from_string(cls, text: str, base_dir: str = ".") -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}", "cli") from None
        sections = {}
        for name in parser.sections():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", "cli")
            section_cls = SECTIONS[name]
            known = {f.name for f in fields(section_cls)}
            values = {}
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigError(f"unknown key {name}.{key}", "cli")
                values[key] = _parse(_field_kind(section_cls, key), raw, f"{name}.{key}")
            sections[name] = section_cls(**values)
        return cls(**sections, base_dir=base_dir)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} not found", "cli")
        with open(path) as fh:
            return cls.from_string(fh.read(), os.path.dirname(os.path.abspath(path)))

    def to_string(self) -> str:
        out = []
        for name in SECTIONS:
            out.append(f"[{name}]")
            for f in fields(getattr(self, name)):
                out.append(f"{f.name} = {_format(getattr(getattr(self, name), f.name))}")
            out.append("")
        return "\n".join(out)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    # validation -------------------------------------------------------------

    def validate(self, command: str | None = None) -> None:
        """Raise ConfigError on the first inconsistency; files referenced by
        ``command`` must exist."""
        d = self.run.dim
        if d not in (1, 2, 3):
            raise ConfigError("run.dim must be 1, 2 or 3", "cli")
        for (section, key), options in CHOICES.items():
            value = getattr(getattr(self, section), key)
            if value not in options:
                raise ConfigError(f"{section}.{key} = {value!r} not in {options}", "cli")
        for section, key in POSITIVE:
            if not getattr(getattr(self, section), key) > 0:
                raise ConfigError(f"{section}.{key} must be positive", "cli")
        for name in ("a", "b"):
            sym = getattr(self, name)
            for key in ("x0", "y0"):
                if getattr(sym, key) and len(getattr(sym, key)) != d:
                    raise ConfigError(f"{name}.{key} has {len(getattr(sym, key))} entries, run.dim is {d}",
                                      "cli")
        if self.coupling.lam_max < 0:
            raise ConfigError("coupling.lam_max must be nonnegative", "cli")
        if self.transport.t_final < 0 or self.vn.t_final < 0 or self.duhamel.t < 0:
            raise ConfigError("times must be nonnegative", "cli")
        if self.transport.geometry == "slab" and d != 1:
            raise ConfigError("slab geometry pairs exactly only in d = 1", "cli")
        if self.transport.geometry == "slab" and self.transport.solver == "grid" \
                and self.coupling.kind != "zero" and self.coupling.lam_max > 0 \
                and self.transport.kernel == "none":
            raise ConfigError("nonzero coupling needs a kernel", "cli")
        if not 0 < self.duhamel.inner_radius < 1 or not 0 < self.vn.inner_radius < 1:
            raise ConfigError("inner_radius must lie in (0, 1)", "cli")
        if any(v <= 0 for v in self.duhamel.r_values + self.duhamel.alpha_values + self.duhamel.gain_speeds):
            raise ConfigError("duhamel ladders and speeds must be positive", "cli")
        if any(not 0 < v < 1 for v in self.scatterers.eps_values):
            raise ConfigError("scatterers.eps_values must lie in (0, 1)", "cli")
        needed = []
        if command == "kernel" and self.scattering.tmatrix_file:
            needed.append(self.scattering.tmatrix_file)
        if command == "vn-run" and self.vn.scatterer_file:
            needed.append(self.vn.scatterer_file)
        for path in needed:
            if not os.path.isfile(self.resolve(path)):
                raise ConfigError(f"referenced file {path} does not exist", "cli")
