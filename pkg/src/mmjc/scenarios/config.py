"""Scenario configuration: a sectioned key-value (INI) schema.

All lengths are absolute (natural units); presets convert from wavelengths.
Lists are comma separated; walls are ``start:end:sigma`` triples and PEC
intervals ``start:end`` pairs, separated by semicolons.

Schema (section.key = type, default)::

    [geometry] x_min, x_max = float;  pml_left, pml_right = float (0)
               walls = triples ("");  pec = pairs ("")
               points_per_wavelength = float (40); points_per_skin_depth = float (10)
               min_wall_elements = int (4)
    [atoms]    omega_a = float (50); d_eg = float; positions = float list
    [band]     center = float (omega_a); fraction = float (0.2)
    [refinement] mode = adaptive|uniform (adaptive); budget = int (400)
               tol = float (0.05); n_coarse = int (32); n_uniform = int (0)
               recurrence_margin = float (1.25)
    [model]    variant = bama|ma|ba (bama); compress = bool (true); max_quanta = int (1)
    [propagation] t_final = float (30); dt = float (0: automatic); scheme = cn|rk4 (cn)
               stride = int (0: automatic); steps_per_period = int (200)
    [initial]  kind = excited|dicke|esd (excited); excited = int list (0); esd_a = float (0.2)
    [outputs]  field_times = float list (""); field_points = int (0)
               fit = lifetime|envelope|none (lifetime); label = str ("")
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

VARIANTS = ("bama", "ma", "ba")
INITIAL_KINDS = ("excited", "dicke", "esd")


class ConfigError(ValueError):
    pass


def _floats(text):
    text = text.strip()
    return tuple(float(v) for v in text.split(",") if v.strip()) if text else ()


def _ints(text):
    text = text.strip()
    return tuple(int(v) for v in text.split(",") if v.strip()) if text else ()


def _tuples(text, width):
    out = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        parts = [float(v) for v in item.split(":")]
        if len(parts) != width:
            raise ConfigError(f"expected {width} ':'-separated numbers, got {item!r}")
        out.append(tuple(parts))
    return tuple(out)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(":".join(_fmt(x) for x in t) for t in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class Geometry:
    x_min: float
    x_max: float
    pml_left: float = 0.0
    pml_right: float = 0.0
    walls: tuple = ()
    pec: tuple = ()
    points_per_wavelength: float = 40.0
    points_per_skin_depth: float = 10.0
    min_wall_elements: int = 4


@dataclass
class Atoms:
    d_eg: float
    positions: tuple
    omega_a: float = 50.0


@dataclass
class Band:
    center: float = 0.0  # 0 means omega_a
    fraction: float = 0.2


@dataclass
class Refinement:
    mode: str = "adaptive"
    budget: int = 400
    tol: float = 0.05
    n_coarse: int = 32
    n_uniform: int = 0
    recurrence_margin: float = 1.25


@dataclass
class Model:
    variant: str = "bama"
    compress: bool = True
    max_quanta: int = 1


@dataclass
class Propagation:
    t_final: float = 30.0
    dt: float = 0.0
    scheme: str = "cn"
    stride: int = 0
    steps_per_period: int = 200


@dataclass
class Initial:
    kind: str = "excited"
    excited: tuple = (0,)
    esd_a: float = 0.2


@dataclass
class Outputs:
    field_times: tuple = ()
    field_points: int = 0
    fit: str = "lifetime"
    label: str = ""


SECTIONS = {
    "geometry": Geometry,
    "atoms": Atoms,
    "band": Band,
    "refinement": Refinement,
    "model": Model,
    "propagation": Propagation,
    "initial": Initial,
    "outputs": Outputs,
}

_PARSERS = {
    ("geometry", "walls"): lambda s: _tuples(s, 3),
    ("geometry", "pec"): lambda s: _tuples(s, 2),
    ("atoms", "positions"): _floats,
    ("initial", "excited"): _ints,
    ("outputs", "field_times"): _floats,
}


@dataclass
class ScenarioConfig:
    geometry: Geometry
    atoms: Atoms
    band: Band = field(default_factory=Band)
    refinement: Refinement = field(default_factory=Refinement)
    model: Model = field(default_factory=Model)
    propagation: Propagation = field(default_factory=Propagation)
    initial: Initial = field(default_factory=Initial)
    outputs: Outputs = field(default_factory=Outputs)

    # --- derived quantities
    @property
    def wavelength(self):
        return 2 * np.pi / self.atoms.omega_a

    @property
    def band_limits(self):
        c = self.band.center or self.atoms.omega_a
        half = 0.5 * self.band.fraction * c
        return (c - half, c + half)

    # --- validation
    def validate(self):
        g, a = self.geometry, self.atoms
        if not g.x_max > g.x_min:
            raise ConfigError("geometry: x_max must exceed x_min")
        lo, hi = g.x_min - g.pml_left, g.x_max + g.pml_right
        for w in g.walls:
            if not (g.x_min <= w[0] < w[1] <= g.x_max):
                raise ConfigError(f"geometry: wall {w} leaves the physical domain")
            if w[2] < 0:
                raise ConfigError(f"geometry: wall {w} has negative conductivity")
        for p in g.pec:
            if not (lo <= p[0] <= p[1] <= hi):
                raise ConfigError(f"geometry: PEC interval {p} leaves the domain")
        if not a.positions:
            raise ConfigError("atoms: at least one position is required")
        for x in a.positions:
            if not g.x_min <= x <= g.x_max:
                raise ConfigError(f"atoms: position {x} outside the physical domain")
        if a.d_eg <= 0 or a.omega_a <= 0:
            raise ConfigError("atoms: omega_a and d_eg must be positive")
        if not 0 < self.band.fraction < 2:
            raise ConfigError("band: fraction must lie in (0, 2)")
        if self.refinement.mode not in ("adaptive", "uniform"):
            raise ConfigError("refinement: mode must be adaptive or uniform")
        if self.refinement.mode == "uniform" and self.refinement.n_uniform < 2:
            raise ConfigError("refinement: uniform mode needs n_uniform >= 2")
        if self.refinement.budget < 16:
            raise ConfigError("refinement: budget must be at least 16")
        if self.model.variant not in VARIANTS:
            raise ConfigError(f"model: variant must be one of {VARIANTS}")
        if self.model.variant == "ma" and not any(w[2] > 0 for w in g.walls):
            raise ConfigError("model: the MA-only variant needs a lossy wall (chi_I > 0)")
        if self.model.max_quanta not in (1, 2):
            raise ConfigError("model: max_quanta must be 1 or 2")
        if self.propagation.scheme not in ("cn", "rk4"):
            raise ConfigError("propagation: scheme must be cn or rk4")
        if self.propagation.t_final <= 0:
            raise ConfigError("propagation: t_final must be positive")
        ini = self.initial
        if ini.kind not in INITIAL_KINDS:
            raise ConfigError(f"initial: kind must be one of {INITIAL_KINDS}")
        n = len(a.positions)
        if ini.kind == "excited":
            if not ini.excited or any(not 0 <= j < n for j in ini.excited):
                raise ConfigError("initial: excited atom indices out of range")
            if len(ini.excited) > self.model.max_quanta:
                raise ConfigError("initial: more excited atoms than max_quanta allows")
        if ini.kind == "esd":
            if n != 2:
                raise ConfigError("initial: the ESD mixture needs exactly two atoms")
            if self.model.max_quanta != 2:
                raise ConfigError("initial: the ESD mixture needs max_quanta = 2")
            if not 0 <= ini.esd_a <= 1:
                raise ConfigError("initial: esd_a must lie in [0, 1]")
        if self.outputs.fit not in ("lifetime", "envelope", "none"):
            raise ConfigError("outputs: fit must be lifetime, envelope or none")
        if self.outputs.field_times and ini.kind == "esd":
            raise ConfigError("outputs: field profiles are defined for single-excitation runs only")
        return self

    # --- serialization
    def to_ini(self):
        cp = configparser.ConfigParser()
        for name in SECTIONS:
            sec = getattr(self, name)
            cp[name] = {f.name: _fmt(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        unknown = set(cp.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")
        parts = {}
        for name, klass in SECTIONS.items():
            raw = dict(cp[name]) if cp.has_section(name) else {}
            known = {f.name: f for f in fields(klass)}
            extra = set(raw) - set(known)
            if extra:
                raise ConfigError(f"[{name}]: unknown keys {sorted(extra)}")
            kw = {}
            for key, text in raw.items():
                kw[key] = _convert(name, key, known[key], text)
            try:
                parts[name] = klass(**kw)
            except TypeError as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
        return cls(**parts).validate()

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_ini(fh.read())

    def canonical(self):
        return json.dumps(asdict(self), sort_keys=True, default=_fmt)

    def digest(self, *parts):
        """Deterministic hash of the canonical config (or selected sections)."""
        if parts:
            d = asdict(self)
            payload = json.dumps({p: d[p] for p in parts}, sort_keys=True)
        else:
            payload = self.canonical()
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def set(self, dotted, value):
        """Override ``section.key`` from a string value."""
        try:
            name, key = dotted.split(".")
            sec = getattr(self, name)
            f = {f.name: f for f in fields(sec)}[key]
        except (ValueError, AttributeError, KeyError) as exc:
            raise ConfigError(f"unknown parameter {dotted!r}") from exc
        setattr(sec, key, _convert(name, key, f, str(value)))
        return self


def _convert(section, key, f, text):
    try:
        if (section, key) in _PARSERS:
            return _PARSERS[(section, key)](text)
        kind = f.type if isinstance(f.type, str) else f.type.__name__
        if kind == "bool":
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "tuple":
            return _floats(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {text!r}") from exc
