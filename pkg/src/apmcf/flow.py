"""Constrained mean curvature flow dF/dt = (h_k - H) nu of radial graphs.

The graph function is advanced with classic RK4.  The nonlocal term h_k is
recomputed at every stage.  A surface moving with normal speed f is, up to a
tangential reparametrization, the radial graph with d(rho)/dt = f / <nu, omega>.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import List, Optional

import numpy as np

from .ambient import AmbientMetric, Kind
from .errors import (DegenerateMetricError, DegenerateSurfaceError, DomainError,
                     FlowLabError, GraphDegenerationError, NonpositiveMeanCurvatureError,
                     StepRejectedError)
from .surface import (GeometrySnapshot, GlobalTerms, RadialGraph, covariant_grad_A_norm,
                      enclosed_volume, global_terms, laplace_beltrami, snapshot)

GRAPH_MARGIN = 0.05
MAX_HALVINGS = 10


class GlobalTerm(str, Enum):
    """Choice of the nonlocal term h_k."""

    H0 = "h0"   # k = 0, area preserving
    H = "h"     # k = -1, volume preserving
    H1 = "h1"   # k = 1, experimental

    @property
    def k(self):
        return {"h0": 0, "h": -1, "h1": 1}[self.value]


class Termination(str, Enum):
    CONVERGED = "Converged"
    TIME_BUDGET = "TimeBudget"
    STEP_BUDGET = "StepBudget"
    ERROR = "Error"


@dataclass(frozen=True)
class BsigmaParams:
    """Radius and constants of the round-surface class B_sigma(B1, B2, B3)."""

    sigma: Optional[float] = None   # None: area radius of the initial surface
    B1: float = 2.0
    B2: float = 100.0
    B3: float = 100.0


@dataclass(frozen=True)
class FlowConfig:
    global_term: GlobalTerm = GlobalTerm.H0
    cfl: float = 0.2
    t_end: float = 1.0e4
    max_steps: int = 1_000_000
    stop_umbilic_tol: float = 1e-9      # relative to h_k
    monitor_cadence: int = 50
    r_inner: Optional[float] = None     # inner sphere for Schwarzschild volumes
    bsigma: BsigmaParams = field(default_factory=BsigmaParams)

    def __post_init__(self):
        object.__setattr__(self, "global_term", GlobalTerm(self.global_term))
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError("cfl must lie in (0, 0.5]")
        # t_end = 0 is accepted: the run ends immediately with TimeBudget
        if not self.t_end >= 0.0:
            raise ValueError("t_end must be non-negative")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if not self.stop_umbilic_tol > 0.0:
            raise ValueError("stop_umbilic_tol must be positive")
        if self.monitor_cadence < 1:
            raise ValueError("monitor_cadence must be at least 1")


# -- pointwise flow field ---------------------------------------------------------

def normal_speed(snap: GeometrySnapshot, terms: GlobalTerms, config: FlowConfig):
    """Per-node normal speed f = h_k - H."""
    hk = terms.global_term(config.global_term.k)
    if not math.isfinite(hk):
        raise NonpositiveMeanCurvatureError("h1 needs a positive total Gauss-type curvature")
    return hk - snap.H


def graph_margin(snap: GeometrySnapshot):
    """Cosine of the angle between nu and omega, both measured in the ambient metric."""
    first = snap.first
    if first.omega is not None:
        wnorm = np.sqrt(first.omega)
    else:
        w = snap.grid.frame["w"]
        gbar = first.gbar
        wnorm = np.sqrt(np.sum(np.matmul(gbar, w[..., None])[..., 0] * w, axis=-1))
    return snap.first.nu_dot_omega / wnorm


def radial_velocity(s: RadialGraph, f, snap: GeometrySnapshot):
    """The radial motion d(rho)/dt whose normal component is f."""
    margin = graph_margin(snap)
    worst = float(np.min(margin))
    if not worst >= GRAPH_MARGIN:
        raise GraphDegenerationError(
            f"graph margin {worst:.3g} below {GRAPH_MARGIN}: surface is leaving the radial-graph class")
    return f / snap.first.nu_dot_omega


@dataclass
class FlowState:
    """A surface together with everything the integrator derives from it."""

    t: float
    surface: RadialGraph
    ambient: AmbientMetric
    snap: GeometrySnapshot
    terms: GlobalTerms          # volume is NaN here; see ``volume``
    hk: float
    speed: np.ndarray           # f = h_k - H
    velocity: np.ndarray        # filtered d(rho)/dt
    r_inner: Optional[float] = None

    @cached_property
    def volume(self):
        return enclosed_volume(self.surface, self.ambient, self.r_inner)

    @property
    def full_terms(self):
        return replace(self.terms, volume=self.volume)

    @property
    def umbilic_defect(self):
        return float(np.max(np.abs(self.speed)))


def evaluate(t, s: RadialGraph, ambient: AmbientMetric, config: FlowConfig,
             r_inner=None) -> FlowState:
    """Geometry, global terms and the (polar-filtered) radial velocity of ``s``."""
    snap = snapshot(s, ambient)
    terms = global_terms(s, ambient, snap.first, snap.second, r_inner, with_volume=False)
    f = normal_speed(snap, terms, config)
    vel = s.grid.polar_filter(radial_velocity(s, f, snap))
    return FlowState(t, s, ambient, snap, terms, terms.global_term(config.global_term.k),
                     f, vel, r_inner)


def stable_dt(state: FlowState, config: FlowConfig, ricci=None):
    """Parabolic step: cfl * (min arclength spacing)^2 / max(|A|^2 + |Ric| + 1).

    The longitudinal spacing on each ring is the one that survives the polar
    filter, pi / k_c, rather than the raw grid spacing.
    """
    grid = state.surface.grid
    g = state.snap.g
    ds_t = np.sqrt(g[..., 0, 0]) * grid.theta_spacing[:, None]
    ds_p = np.sqrt(g[..., 1, 1]) * (np.pi / grid.filter_cutoff)[:, None]
    ds = min(float(ds_t.min()), float(ds_p.min()))
    if ricci is None:
        ricci = state.ambient.ricci_bound(state.snap.F, check=False)
    denom = float(np.max(state.snap.A_sq + ricci + 1.0))
    return config.cfl * ds * ds / denom


_RETRY_ERRORS = (DegenerateSurfaceError, GraphDegenerationError, DomainError,
                 DegenerateMetricError)


def _rk4(state: FlowState, dt, config, anchor=None):
    s, amb, r_in = state.surface, state.ambient, state.r_inner
    rho = s.rho

    def stage(rho_stage, t):
        if not np.all(rho_stage > 0.0):
            raise DegenerateSurfaceError("radius became non-positive")
        return evaluate(t, s.with_rho(rho_stage), amb, config, r_in).velocity

    k1 = state.velocity
    k2 = stage(rho + 0.5 * dt * k1, state.t + 0.5 * dt)
    k3 = stage(rho + 0.5 * dt * k2, state.t + 0.5 * dt)
    k4 = stage(rho + dt * k3, state.t + dt)
    incr = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if anchor is None:
        new = rho + incr
    else:
        # Rounding of rho + incr leaves noise in the longitudinal modes the
        # polar filter removes from the velocity; nothing damps it, and the
        # 1/sin^2 terms of H amplify it.  Re-projecting the displacement from
        # the anchor keeps that noise at one rounding instead of a random walk.
        new = anchor + s.grid.polar_filter((rho - anchor) + incr)
    if not np.all(new > 0.0):
        raise DegenerateSurfaceError("radius became non-positive")
    return evaluate(state.t + dt, s.with_rho(new), amb, config, r_in)


def step(state: FlowState, config: FlowConfig, dt=None, ricci=None, anchor=None):
    """One RK4 step; the step is halved (up to 10 times) if an invariant fails.

    ``anchor`` is the initial graph function of the run; when given, the
    displacement from it is kept inside the polar filter's band.
    Returns ``(next_state, dt_used)``.
    """
    if dt is None:
        dt = stable_dt(state, config, ricci)
    last = None
    for _ in range(MAX_HALVINGS + 1):
        try:
            return _rk4(state, dt, config, anchor), dt
        except _RETRY_ERRORS as exc:
            last = exc
            dt *= 0.5
    raise StepRejectedError(f"step rejected after {MAX_HALVINGS} halvings: {last}")


# -- monitors ---------------------------------------------------------------------

@dataclass(frozen=True)
class Consistency:
    """Residuals of the discrete evolution against the continuous evolution laws.

    area : |d|M|/dt - int H f|
    volume : |dVol/dt - int f|
    vol_rate : int f dmu (trapezoid), non-negative for k = 0
    dtH : max over nodes of |dH/dt - (Lap H + (|A|^2 + Ric(nu,nu))(H - h_k) + dH(T))|
    dth : |dh/dt - [int f (H^2/2 - |A°|^2 - Ric(nu,nu)) - h int H f] / |M||
    """

    area: float
    volume: float
    vol_rate: float
    dtH: float
    dth: float


def _ricci_nn(state: FlowState):
    return state.ambient.ricci_normal(state.snap.F, state.snap.nu, check=False)


def _dtH_rhs(state: FlowState, ric_nn):
    s, snap = state.surface, state.snap
    first = snap.first
    lap = laplace_beltrami(s, state.ambient, first, snap.H)
    # tangential part of the radial motion: T^i = g^ij <rho_t omega, d_j F>
    w = s.grid.frame["w"]
    vt = state.velocity[..., None] * w
    if state.ambient.is_conformal:
        vlow = first.gbar[..., 0, 0][..., None] * vt
    else:
        vlow = np.einsum("...ab,...b->...a", first.gbar, vt)
    c_t = (vlow * first.Ft).sum(axis=-1)
    c_p = (vlow * first.Fp).sum(axis=-1)
    gi = first.ginv
    T_t = gi[..., 0, 0] * c_t + gi[..., 0, 1] * c_p
    T_p = gi[..., 1, 0] * c_t + gi[..., 1, 1] * c_p
    grid = s.grid
    dH = T_t * grid.d_theta(snap.H) + T_p * grid.d_phi(snap.H)
    return lap + (snap.A_sq + ric_nn) * (snap.H - state.hk) + dH


def _rates(state: FlowState, ric_nn):
    snap, f = state.snap, state.speed
    area = state.terms.area
    i_Hf = snap.integrate(snap.H * f)
    i_f = snap.integrate(f)
    h_rate = (snap.integrate(f * (0.5 * snap.H**2 - snap.Aring_sq - ric_nn))
              - state.terms.h * i_Hf) / area
    return i_Hf, i_f, h_rate


def evolution_consistency(before: FlowState, after: FlowState, dt) -> Consistency:
    """Compare one step of the discrete flow with the continuous evolution equations.

    All rates are compared against the trapezoid average of the two end states.
    """
    ric_b, ric_a = _ricci_nn(before), _ricci_nn(after)
    ib, ia = _rates(before, ric_b), _rates(after, ric_a)
    avg = [0.5 * (x + y) for x, y in zip(ib, ia)]
    d_area = (after.terms.area - before.terms.area) / dt
    d_vol = (after.volume - before.volume) / dt
    d_h = (after.terms.h - before.terms.h) / dt
    dH = (after.snap.H - before.snap.H) / dt
    rhs = 0.5 * (_dtH_rhs(before, ric_b) + _dtH_rhs(after, ric_a))
    return Consistency(
        area=abs(d_area - avg[0]),
        volume=abs(d_vol - avg[1]),
        vol_rate=avg[1],
        dtH=float(np.max(np.abs(dH - rhs))),
        dth=abs(d_h - avg[2]),
    )


@dataclass(frozen=True)
class MonitorReport:
    t: float
    step: int
    dt: float
    area: float
    area_drift: float         # relative to the initial area
    volume: float
    h: float
    h0: float
    h0_over_h_minus_1: float
    hk: float
    max_Aring: float
    max_gradAring: float
    min_H: float
    max_H: float
    max_r: float
    max_r_dev: float          # max |r - sigma|
    identity_h: float         # defect of int (H-h)^2 = h (h0-h) |M|, over h h0 |M|
    identity_h0: float        # defect of int (H-h0)^2 = h0 (h0-h) |M|, over h h0 |M|
    residuals: Consistency
    in_B1: bool
    in_B2: bool
    in_B3: bool


@dataclass(frozen=True)
class FlowRecord:
    t: float
    surface: RadialGraph
    terms: GlobalTerms
    report: MonitorReport


@dataclass
class FlowRun:
    records: List[FlowRecord]
    termination: Termination
    final: Optional[FlowState]      # None when the initial surface is rejected
    steps: int
    initial_area: float
    sigma: float
    error_kind: Optional[str] = None
    error_message: Optional[str] = None

    @property
    def converged(self):
        return self.termination is Termination.CONVERGED

    def series(self, name):
        """(t, values) arrays of a MonitorReport field.

        Residuals are addressed as ``res_<name>`` (``res_area``, ``res_volume``,
        ``res_vol_rate``, ``res_dtH``, ``res_dth``).
        """
        t = np.array([r.t for r in self.records])
        if name.startswith("res_"):
            v = [getattr(r.report.residuals, name[4:]) for r in self.records]
        else:
            v = [getattr(r.report, name) for r in self.records]
        return t, np.array(v, dtype=float)


def _identity_defect(lhs, scale, terms):
    # relative to h h0 |M|, the size of the terms whose difference both sides are
    rhs = scale * (terms.h0 - terms.h) * terms.area
    return abs(lhs - rhs) / abs(terms.h * terms.h0 * terms.area)


def monitor(state: FlowState, earlier: FlowState, later: FlowState, dt, step_index, area0,
            bs: BsigmaParams, sigma) -> MonitorReport:
    """Monitor report for ``state``.

    The consistency residuals compare the two states ``earlier`` and ``later``,
    one of which is ``state`` itself.
    """
    res = evolution_consistency(earlier, later, later.t - earlier.t)
    snap, terms = state.snap, state.full_terms
    grad = covariant_grad_A_norm(state.surface, state.ambient, snap.first, snap.second)
    max_A = float(np.sqrt(np.max(np.maximum(snap.Aring_sq, 0.0))))
    r = np.linalg.norm(snap.F, axis=-1)
    dev = float(np.max(np.abs(r - sigma)))
    max_grad = float(np.max(grad))
    return MonitorReport(
        t=state.t, step=step_index, dt=dt, area=terms.area,
        area_drift=(terms.area - area0) / area0, volume=terms.volume,
        h=terms.h, h0=terms.h0, h0_over_h_minus_1=terms.h0_over_h_minus_1, hk=state.hk,
        max_Aring=max_A, max_gradAring=max_grad,
        min_H=float(np.min(snap.H)), max_H=float(np.max(snap.H)), max_r=float(np.max(r)),
        max_r_dev=dev, identity_h=_identity_defect(terms.int_dev_h, terms.h, terms),
        identity_h0=_identity_defect(terms.int_dev_h0, terms.h0, terms), residuals=res,
        in_B1=dev <= bs.B1, in_B2=max_A <= bs.B2 * sigma**-3,
        in_B3=max_grad <= bs.B3 * sigma**-4,
    )


def default_r_inner(s: RadialGraph, ambient: AmbientMetric):
    """Inner sphere for Schwarzschild volumes: a tenth of the typical radius,
    kept clear of the perturbation cutoff."""
    if ambient.kind is not Kind.SCHWARZSCHILD:
        return None
    r = 0.1 * float(np.median(np.linalg.norm(s.embed()[0], axis=-1)))
    if not ambient.perturbation.is_zero:
        r = max(r, 1.5 * ambient.perturbation.r_cut)
    return r


def run(initial: RadialGraph, ambient: AmbientMetric, config: FlowConfig = FlowConfig(),
        callback=None) -> FlowRun:
    """Integrate until umbilic to tolerance, out of time, out of steps, or an error.

    Records are emitted every ``monitor_cadence`` steps and at the final
    state (when at least one step was taken).  Errors end the run with
    termination ``Error`` and the records gathered so far.
    """
    r_inner = config.r_inner if config.r_inner is not None else default_r_inner(initial, ambient)
    records: List[FlowRecord] = []
    try:
        cur = evaluate(0.0, initial, ambient, config, r_inner)
    except FlowLabError as exc:
        return FlowRun([], Termination.ERROR, None, 0, float("nan"), float("nan"),
                       error_kind=type(exc).__name__, error_message=str(exc))
    area0 = cur.terms.area
    bs = config.bsigma
    sigma = bs.sigma if bs.sigma is not None else math.sqrt(area0 / (4.0 * math.pi))
    conformal = ambient.is_conformal
    ricci = None if conformal else ambient.ricci_bound(cur.snap.F, check=False)
    last_mon, last_dt = None, 0.0
    steps = 0
    reason, err = None, None

    def record(state, earlier, later, dt):
        rep = monitor(state, earlier, later, dt, steps, area0, bs, sigma)
        records.append(FlowRecord(state.t, state.surface, state.full_terms, rep))
        if callback is not None:
            callback(rep)

    # residuals of a record span the interval back to the previous record; the
    # first record uses its own outgoing step instead
    try:
        while True:
            if cur.umbilic_defect <= config.stop_umbilic_tol * abs(cur.hk):
                reason = Termination.CONVERGED
                break
            if cur.t >= config.t_end:
                reason = Termination.TIME_BUDGET
                break
            if steps >= config.max_steps:
                reason = Termination.STEP_BUDGET
                break
            dt = stable_dt(cur, config, ricci)
            dt = min(dt, config.t_end - cur.t)
            nxt, dt = step(cur, config, dt, anchor=initial.rho)
            if steps % config.monitor_cadence == 0:
                if last_mon is None:
                    record(cur, cur, nxt, dt)
                else:
                    record(cur, last_mon, cur, dt)
                last_mon = cur
                if not conformal:
                    ricci = ambient.ricci_bound(nxt.snap.F, check=False)
            cur, last_dt = nxt, dt
            steps += 1
    except FlowLabError as exc:
        reason, err = Termination.ERROR, exc
    if last_mon is not None and last_mon is not cur:
        try:
            record(cur, last_mon, cur, last_dt)
        except FlowLabError as exc:
            if err is None:
                reason, err = Termination.ERROR, exc
    return FlowRun(records, reason, cur, steps, area0, sigma,
                   error_kind=type(err).__name__ if err else None,
                   error_message=str(err) if err else None)


# -- output -----------------------------------------------------------------------

TIMESERIES_COLUMNS = (
    "t", "area", "vol", "h", "h0", "h0_over_h_minus_1", "max_Aring", "max_gradAring",
    "minH", "maxH", "max_r", "dt", "area_drift", "res_area", "res_vol", "vol_rate",
    "res_dtH", "res_dth", "max_r_dev", "identity_h", "identity_h0", "in_B1", "in_B2", "in_B3",
)


FLAG_COLUMNS = ("in_B1", "in_B2", "in_B3")


def report_row(rep: MonitorReport):
    r = rep.residuals
    return (rep.t, rep.area, rep.volume, rep.h, rep.h0, rep.h0_over_h_minus_1, rep.max_Aring,
            rep.max_gradAring, rep.min_H, rep.max_H, rep.max_r, rep.dt, rep.area_drift,
            r.area, r.volume, r.vol_rate, r.dtH, r.dth, rep.max_r_dev, rep.identity_h,
            rep.identity_h0, rep.in_B1, rep.in_B2, rep.in_B3)


def timeseries_columns(run_or_records):
    """Column name -> array over the monitored records."""
    recs = run_or_records.records if isinstance(run_or_records, FlowRun) else run_or_records
    rows = np.array([report_row(rec.report) for rec in recs], dtype=float)
    rows = rows.reshape(len(recs), len(TIMESERIES_COLUMNS))
    return {name: rows[:, i] for i, name in enumerate(TIMESERIES_COLUMNS)}


def _fmt(name, v):
    return str(int(v)) if name in FLAG_COLUMNS else f"{v:.17g}"


def write_timeseries_csv(path, columns, stride=1):
    """Write ``columns`` (name -> array); keeps every ``stride``-th row and the last."""
    names = list(columns)
    n = len(columns[names[0]]) if names else 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(names)
        for i in range(n):
            if i % stride == 0 or i == n - 1:
                wr.writerow([_fmt(k, columns[k][i]) for k in names])


def read_timeseries_csv(path):
    """Column name -> float array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    # a header-only file still yields every column, empty
    return {name: data[:, i] for i, name in enumerate(header)}
