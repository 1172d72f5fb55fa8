"""Simulation configuration: strict parsing, validation and canonical form.

Config files are INI-style (flat ``[section]`` blocks of ``key = value``);
values are JSON literals, with bare words accepted as strings::

    [domain]
    lengths = 6.283185307179586
    n = 16

    [physics]
    lambda1 = 1.0
    lambda2 = 1.0
    lambda3 = 1.0
    h_family = cosine

JSON files with the same section/key structure are accepted too.  The
canonical form (``SimConfig.to_dict``) lists every key with defaults filled
in and is what ``config.json`` in a results directory contains.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .families import initial_datum, noise_field
from .llg import PhysParams
from .sde import RecordingPolicy, SchemeConfig, _num_steps
from .spectral import Domain

REQUIRED = object()


def _f(v, key):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {v!r}", key=key) from None
    if not math.isfinite(x) or isinstance(v, bool):
        raise ConfigError(f"{key} must be a finite number, got {v!r}", key=key)
    return x


def _i(v, key):
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise ConfigError(f"{key} must be an integer, got {v!r}", key=key)
    return int(v)


def _tuple(v, conv, key):
    items = v if isinstance(v, (list, tuple)) else [v]
    return tuple(conv(x, key) for x in items)


def _vec3(v, key):
    t = _tuple(v, _f, key)
    if len(t) != 3:
        raise ConfigError(f"{key} must have 3 entries", key=key)
    return t


def _s(v, key):
    if not isinstance(v, str):
        raise ConfigError(f"{key} must be a string, got {v!r}", key=key)
    return v


def _b(v, key):
    if not isinstance(v, bool):
        raise ConfigError(f"{key} must be true or false, got {v!r}", key=key)
    return v


@dataclass(frozen=True)
class DomainSection:
    n: tuple = REQUIRED
    lengths: tuple = (2 * math.pi,)
    dim: int = 1
    N: tuple | None = None

    _conv = {"n": lambda v, k: _tuple(v, _i, k), "lengths": lambda v, k: _tuple(v, _f, k),
             "dim": _i, "N": lambda v, k: None if v is None else _tuple(v, _i, k)}

    def check(self):
        def per_axis(t, key):
            if t is None:
                return None
            if len(t) == 1:
                return t * self.dim
            if len(t) != self.dim:
                raise ConfigError(f"domain.{key} needs {self.dim} entries", key=f"domain.{key}")
            return t
        if self.dim not in (1, 2):
            raise ConfigError("domain.dim must be 1 or 2", key="domain.dim")
        out = dataclasses.replace(self, n=per_axis(self.n, "n"), lengths=per_axis(self.lengths, "lengths"),
                                  N=per_axis(self.N, "N"))
        if min(out.n) < 1:
            raise ConfigError("domain.n must be >= 1", key="domain.n")
        if min(out.lengths) <= 0:
            raise ConfigError("domain.lengths must be positive", key="domain.lengths")
        if out.N is not None and any(N < n for N, n in zip(out.N, out.n)):
            raise ConfigError("domain.N must be >= domain.n", key="domain.N")
        return out


@dataclass(frozen=True)
class PhysicsSection:
    lambda1: float = REQUIRED
    lambda2: float = REQUIRED
    lambda3: float = REQUIRED
    h_family: str = "cosine"
    h_vector: tuple = (0.0, 0.0, 1.0)
    h_amplitude: float = 1.0

    _conv = {"lambda1": _f, "lambda2": _f, "lambda3": _f, "h_family": _s, "h_vector": _vec3,
             "h_amplitude": _f}

    def check(self):
        if self.lambda2 <= 0:
            raise ConfigError("physics.lambda2 must be positive", key="physics.lambda2")
        if self.h_family not in ("constant", "cosine"):
            raise ConfigError(f"unknown h family {self.h_family!r}", key="physics.h_family")
        return self


@dataclass(frozen=True)
class InitialSection:
    family: str = "winding"
    vector: tuple = (1.0, 0.0, 0.0)
    winding: float = 1.0

    _conv = {"family": _s, "vector": _vec3, "winding": _f}

    def check(self):
        if self.family not in ("constant", "winding"):
            raise ConfigError(f"unknown initial family {self.family!r}", key="initial.family")
        if self.family == "constant" and not any(self.vector):
            raise ConfigError("initial.vector must be nonzero", key="initial.vector")
        return self


@dataclass(frozen=True)
class TimeSection:
    T: float = REQUIRED
    dt: float = REQUIRED

    _conv = {"T": _f, "dt": _f}

    def check(self):
        _num_steps(self.T, self.dt)
        return self


@dataclass(frozen=True)
class SchemeSection:
    name: str = "midpoint"
    midpoint_tol: float = 1e-12
    midpoint_max_iter: int = 50

    _conv = {"name": _s, "midpoint_tol": _f, "midpoint_max_iter": _i}

    def check(self):
        SchemeConfig(self.name, self.midpoint_tol, self.midpoint_max_iter)
        return self


@dataclass(frozen=True)
class EnsembleSection:
    num_paths: int = 1
    master_seed: int = 0
    chunk_size: int = 32

    _conv = {"num_paths": _i, "master_seed": _i, "chunk_size": _i}

    def check(self):
        if self.num_paths < 1:
            raise ConfigError("ensemble.num_paths must be >= 1", key="ensemble.num_paths")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("ensemble.master_seed must fit in 64 bits", key="ensemble.master_seed")
        if self.chunk_size < 1:
            raise ConfigError("ensemble.chunk_size must be >= 1", key="ensemble.chunk_size")
        return self


@dataclass(frozen=True)
class RecordingSection:
    policy: str = "every"
    stride: int = 1

    _conv = {"policy": _s, "stride": _i}

    def check(self):
        RecordingPolicy(self.policy, self.stride)
        return self


@dataclass(frozen=True)
class OutputSection:
    directory: str = "results"
    path_series: bool = True
    series_stride: int = 1
    snapshots: bool = False
    snapshot_stride: int = 100

    _conv = {"directory": _s, "path_series": _b, "series_stride": _i, "snapshots": _b,
             "snapshot_stride": _i}

    def check(self):
        for k in ("series_stride", "snapshot_stride"):
            if getattr(self, k) < 1:
                raise ConfigError(f"output.{k} must be >= 1", key=f"output.{k}")
        return self


@dataclass(frozen=True)
class SweepSection:
    n: tuple = ()
    dt: tuple = ()
    reference_refinements: int = 2

    _conv = {"n": lambda v, k: _tuple(v, _i, k), "dt": lambda v, k: _tuple(v, _f, k),
             "reference_refinements": _i}

    def check(self):
        for key in ("n", "dt"):
            vals = getattr(self, key)
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"sweep.{key} must be strictly increasing", key=f"sweep.{key}")
        for a, b in zip(self.dt, self.dt[1:]):
            r = b / a
            if abs(r - round(r)) > 1e-9 or round(r) & (round(r) - 1):
                raise ConfigError("sweep.dt levels must differ by powers of two", key="sweep.dt")
        if self.reference_refinements < 1:
            raise ConfigError("sweep.reference_refinements must be >= 1",
                              key="sweep.reference_refinements")
        return self


@dataclass(frozen=True)
class DiagnosticsSection:
    besov_alpha: float = 0.375
    besov_q: float = 9.0
    besov_samples: int = 101
    num_probes: int = 5

    _conv = {"besov_alpha": _f, "besov_q": _f, "besov_samples": _i, "num_probes": _i}

    def check(self):
        if not 0 < self.besov_alpha < 1:
            raise ConfigError("diagnostics.besov_alpha must lie in (0, 1)", key="diagnostics.besov_alpha")
        if not self.besov_q > 1:
            raise ConfigError("diagnostics.besov_q must exceed 1", key="diagnostics.besov_q")
        if self.besov_samples < 2:
            raise ConfigError("diagnostics.besov_samples must be >= 2", key="diagnostics.besov_samples")
        if self.num_probes < 1:
            raise ConfigError("diagnostics.num_probes must be >= 1", key="diagnostics.num_probes")
        return self


SECTIONS = {
    "domain": DomainSection, "physics": PhysicsSection, "initial": InitialSection, "time": TimeSection,
    "scheme": SchemeSection, "ensemble": EnsembleSection, "recording": RecordingSection,
    "output": OutputSection, "sweep": SweepSection, "diagnostics": DiagnosticsSection,
}
# Sections that do not change any computed number.
NON_SEMANTIC = {"output": None, "ensemble": ("chunk_size",)}


def _build_section(name, cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"section [{name}] must be a table", key=name)
    conv = cls._conv
    kwargs = {}
    for key, val in raw.items():
        if key not in conv:
            raise ConfigError(f"unknown key {name}.{key}", key=f"{name}.{key}")
        kwargs[key] = conv[key](val, f"{name}.{key}")
    for f_ in dataclasses.fields(cls):
        if f_.default is REQUIRED and f_.name not in kwargs:
            raise ConfigError(f"missing required key {name}.{f_.name}", key=f"{name}.{f_.name}")
    return cls(**kwargs).check()


@dataclass(frozen=True)
class SimConfig:
    domain: DomainSection
    physics: PhysicsSection
    time: TimeSection
    initial: InitialSection = field(default_factory=InitialSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    recording: RecordingSection = field(default_factory=RecordingSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping of sections")
        for name in data:
            if name not in SECTIONS:
                raise ConfigError(f"unknown section [{name}]", key=name)
        for name in ("domain", "physics", "time"):
            if name not in data:
                raise ConfigError(f"missing section [{name}]", key=name)
        return cls(**{name: _build_section(name, SECTIONS[name], data.get(name, {}))
                      for name in SECTIONS})

    def to_dict(self):
        out = {}
        for name in SECTIONS:
            sec = {}
            for f_ in dataclasses.fields(SECTIONS[name]):
                v = getattr(getattr(self, name), f_.name)
                sec[f_.name] = list(v) if isinstance(v, tuple) else v
            out[name] = sec
        return out

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @property
    def config_hash(self):
        d = self.to_dict()
        for sec, keys in NON_SEMANTIC.items():
            if keys is None:
                d.pop(sec)
            else:
                for k in keys:
                    d[sec].pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def replace(self, **sections):
        """New config with whole sections or ``section__key=value`` entries swapped."""
        data = self.to_dict()
        for k, v in sections.items():
            sec, _, key = k.partition("__")
            if key:
                data.setdefault(sec, {})[key] = v
            else:
                data[sec] = v.__dict__ if dataclasses.is_dataclass(v) else v
        return SimConfig.from_dict(data)

    # physical objects
    def build_domain(self, n=None):
        d = self.domain
        modes = d.n if n is None else (n,) * d.dim if isinstance(n, int) else tuple(n)
        if d.N is None:
            grid = None
        else:
            grid = tuple(int(round(N * m / n0)) for N, m, n0 in zip(d.N, modes, d.n))
        return Domain(d.lengths, modes, grid)

    def build_params(self, domain, allow_degenerate=False):
        ph = self.physics
        h = noise_field(domain, ph.h_family, ph.h_vector, ph.h_amplitude)
        return PhysParams(ph.lambda1, ph.lambda2, ph.lambda3, h, allow_degenerate=allow_degenerate)

    def build_u0(self, domain):
        ini = self.initial
        return initial_datum(domain, ini.family, ini.vector, ini.winding)

    def scheme_config(self):
        s = self.scheme
        return SchemeConfig(s.name, s.midpoint_tol, s.midpoint_max_iter)

    def recording_policy(self):
        return RecordingPolicy(self.recording.policy, self.recording.stride)


def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def read_mapping(path):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return {sec: {k: parse_value(v) for k, v in parser.items(sec)} for sec in parser.sections()}


def apply_overrides(data, overrides):
    for item in overrides or ():
        key, sep, value = item.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} must look like section.key=value", key=key.strip())
        data.setdefault(sec, {})[name] = parse_value(value)
    return data


def load_config(path, overrides=()):
    return SimConfig.from_dict(apply_overrides(read_mapping(path), overrides))
