"""Scenario files: line-based ``section.key = value`` text.

Blank lines and ``#`` comments are ignored.  Recognised keys and defaults::

    ambient.kind            euclidean | sphere | hyperbolic | schwarzschild
    ambient.m               0 (must be > 0 for schwarzschild, where it defaults to 1)
    ambient.perturbation    zero | axial_deviatoric              (zero)
    ambient.beta            0
    ambient.r_cut           1
    ambient.r_inner         unset (automatic inner sphere for volumes)
    surface.center          0 0 0
    surface.radius          1
    surface.modes           "l m amplitude; l m amplitude; ..."  (none)
    grid.n_theta            32
    grid.n_phi              2 * n_theta
    flow.global_term        h0 | h | h1                          (h0)
    flow.cfl                0.2
    flow.t_end              10000
    flow.max_steps          1000000
    flow.stop_tol           1e-9   (relative to h_k)
    flow.monitor_cadence    50
    analysis.band_c         10
    analysis.B1, B2, B3     2, 100, 100
    analysis.fit_window     0.6    (trailing fraction of the run used by decay fits)
    analysis.sigma          unset (area radius of the initial surface)
    output.dir              out
    output.cadence          1      (keep every N-th record in the time-series CSV)
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

from .ambient import AmbientMetric, Family, Kind, PerturbationSpec
from .analysis import AnalysisSettings
from .errors import FlowLabError, ParseError, UnknownKeyError, ValidationError
from .flow import BsigmaParams, FlowConfig, GlobalTerm
from .grid import GridSpec

Mode = Tuple[int, int, float]


@dataclass(frozen=True)
class AmbientBlock:
    kind: Kind = Kind.EUCLIDEAN
    m: float = 0.0
    perturbation: Family = Family.ZERO
    beta: float = 0.0
    r_cut: float = 1.0
    r_inner: Optional[float] = None


@dataclass(frozen=True)
class SurfaceBlock:
    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 1.0
    modes: Tuple[Mode, ...] = ()


@dataclass(frozen=True)
class GridBlock:
    n_theta: int = 32
    n_phi: Optional[int] = None


@dataclass(frozen=True)
class FlowBlock:
    global_term: GlobalTerm = GlobalTerm.H0
    cfl: float = 0.2
    t_end: float = 1.0e4
    max_steps: int = 1_000_000
    stop_tol: float = 1e-9
    monitor_cadence: int = 50


@dataclass(frozen=True)
class AnalysisBlock:
    band_c: float = 10.0
    B1: float = 2.0
    B2: float = 100.0
    B3: float = 100.0
    fit_window: float = 0.6
    sigma: Optional[float] = None


@dataclass(frozen=True)
class OutputBlock:
    dir: str = "out"
    cadence: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    ambient: AmbientBlock = field(default_factory=AmbientBlock)
    surface: SurfaceBlock = field(default_factory=SurfaceBlock)
    grid: GridBlock = field(default_factory=GridBlock)
    flow: FlowBlock = field(default_factory=FlowBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    # -- builders ---------------------------------------------------------------
    def ambient_metric(self) -> AmbientMetric:
        a = self.ambient
        pert = PerturbationSpec(a.perturbation, a.beta, a.r_cut)
        return AmbientMetric(a.kind, a.m, pert)

    def grid_spec(self) -> GridSpec:
        n = self.grid.n_theta
        return GridSpec(n, self.grid.n_phi if self.grid.n_phi is not None else 2 * n)

    def flow_config(self) -> FlowConfig:
        f, a = self.flow, self.analysis
        return FlowConfig(global_term=f.global_term, cfl=f.cfl, t_end=f.t_end,
                          max_steps=f.max_steps, stop_umbilic_tol=f.stop_tol,
                          monitor_cadence=f.monitor_cadence, r_inner=self.ambient.r_inner,
                          bsigma=BsigmaParams(a.sigma, a.B1, a.B2, a.B3))

    def analysis_settings(self) -> AnalysisSettings:
        a = self.analysis
        return AnalysisSettings(a.band_c, a.B1, a.B2, a.B3, a.fit_window, a.sigma)


# -- value parsers --------------------------------------------------------------------

def _float(text):
    return float(text)


def _int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _opt_float(text):
    return None if text.lower() in ("none", "auto", "") else float(text)


def _opt_int(text):
    return None if text.lower() in ("none", "auto", "") else _int(text)


def _vector(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError(f"expected three numbers, got {text!r}")
    return tuple(float(p) for p in parts)


def _modes(text):
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 3:
            raise ValueError(f"mode {chunk!r} must be 'l m amplitude'")
        out.append((_int(parts[0]), _int(parts[1]), float(parts[2])))
    return tuple(out)


def _enum(cls):
    def parse(text):
        try:
            return cls(text.lower())
        except ValueError:
            choices = ", ".join(e.value for e in cls)
            raise ValueError(f"expected one of {choices}, got {text!r}") from None
    return parse


_PARSERS = {
    "ambient": {"kind": _enum(Kind), "m": _float, "perturbation": _enum(Family),
                "beta": _float, "r_cut": _float, "r_inner": _opt_float},
    "surface": {"center": _vector, "radius": _float, "modes": _modes},
    "grid": {"n_theta": _int, "n_phi": _opt_int},
    "flow": {"global_term": _enum(GlobalTerm), "cfl": _float, "t_end": _float,
             "max_steps": _int, "stop_tol": _float, "monitor_cadence": _int},
    "analysis": {"band_c": _float, "B1": _float, "B2": _float, "B3": _float,
                 "fit_window": _float, "sigma": _opt_float},
    "output": {"dir": str, "cadence": _int},
}

_LINE = re.compile(r"^([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=\s*(.*)$")


# -- parsing and validation -------------------------------------------------------------

def parse_config(text) -> ScenarioConfig:
    """Parse and validate scenario text.

    Raises the first problem found; its ``errors`` attribute lists all of them.
    """
    errors = []
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mt = _LINE.match(line)
        if mt is None:
            errors.append(ParseError(f"expected 'section.key = value', got {raw.strip()!r}", lineno))
            continue
        sec, key, val = mt.group(1), mt.group(2), mt.group(3).strip()
        name = f"{sec}.{key}"
        if sec not in _PARSERS or key not in _PARSERS[sec]:
            errors.append(UnknownKeyError(f"unknown key {name!r}", lineno))
            continue
        if name in lines:
            errors.append(ValidationError(f"duplicate key {name!r} (first set on line {lines[name]})",
                                          lineno))
            continue
        try:
            values[name] = _PARSERS[sec][key](val)
        except ValueError as exc:
            errors.append(ParseError(f"{name}: {exc}", lineno))
            continue
        lines[name] = lineno
    # validate whatever did parse, so one pass reports every problem
    cfg = _assemble(values)
    errors.extend(_validate(cfg, values, lines))
    if errors:
        errors.sort(key=lambda e: e.line or 0)
        first = errors[0]
        first.errors = errors
        raise first
    return cfg


def _assemble(values):
    blocks = {}
    for f in fields(ScenarioConfig):
        block = f.default_factory()
        kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(f.name + ".")}
        blocks[f.name] = replace(block, **kw)
    amb = blocks["ambient"]
    if amb.kind is Kind.SCHWARZSCHILD and "ambient.m" not in values:
        blocks["ambient"] = replace(amb, m=1.0)
    return ScenarioConfig(**blocks)


def _validate(cfg: ScenarioConfig, values, lines):
    errs = []

    def bad(name, msg):
        errs.append(ValidationError(f"{name}: {msg}", lines.get(name)))

    a = cfg.ambient
    schw = a.kind is Kind.SCHWARZSCHILD
    if schw and not a.m > 0.0:
        bad("ambient.m", f"mass must be positive (m > 0), got {a.m}")
    if not schw:
        for key in ("m", "beta", "r_inner"):
            if f"ambient.{key}" in values and values[f"ambient.{key}"] not in (0.0, None):
                bad(f"ambient.{key}", "only meaningful for the schwarzschild kind")
        if a.perturbation is not Family.ZERO:
            bad("ambient.perturbation", "perturbations only apply to the schwarzschild kind")
    if not a.r_cut > 0.0:
        bad("ambient.r_cut", "must be positive")
    if a.r_inner is not None and not a.r_inner > 0.0:
        bad("ambient.r_inner", "must be positive")
    if not errs:
        try:
            cfg.ambient_metric()
        except (ValueError, FlowLabError) as exc:   # e.g. a degenerate perturbed metric
            bad("ambient.beta", str(exc))

    s = cfg.surface
    if not s.radius > 0.0:
        bad("surface.radius", "must be positive")
    for l, m, _ in s.modes:
        if l < 0 or abs(m) > l:
            bad("surface.modes", f"mode (l={l}, m={m}) needs l >= 0 and |m| <= l")

    try:
        cfg.grid_spec()
    except ValueError as exc:
        bad("grid.n_phi" if "n_phi" in str(exc) else "grid.n_theta", str(exc))

    try:
        cfg.flow_config()
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in ("cfl", "t_end", "max_steps", "monitor_cadence") if k in msg),
                   "stop_tol")
        bad(f"flow.{key}", msg)

    an = cfg.analysis
    for key in ("band_c", "B1", "B2", "B3"):
        if not getattr(an, key) > 0.0:
            bad(f"analysis.{key}", "must be positive")
    if not 0.0 < an.fit_window <= 1.0:
        bad("analysis.fit_window", "must lie in (0, 1]")
    if an.sigma is not None and not an.sigma > 0.0:
        bad("analysis.sigma", "must be positive")
    if cfg.output.cadence < 1:
        bad("output.cadence", "must be at least 1")
    if not cfg.output.dir.strip():
        bad("output.dir", "must not be empty")
    return errs


# -- serialization --------------------------------------------------------------------------

def _render(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return str(v).lower()
    if hasattr(v, "value"):
        return v.value
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(f"{l} {m} {amp!r}" for l, m, amp in v)
    if isinstance(v, tuple):
        return " ".join(repr(float(x)) for x in v)
    return str(v)


def format_config(cfg: ScenarioConfig) -> str:
    """Text that :func:`parse_config` maps back to ``cfg``."""
    out = []
    for f in fields(ScenarioConfig):
        block = getattr(cfg, f.name)
        for bf in fields(block):
            v = getattr(block, bf.name)
            if f.name == "surface" and bf.name == "modes" and not v:
                continue
            out.append(f"{f.name}.{bf.name} = {_render(v)}")
    return "\n".join(out) + "\n"


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
