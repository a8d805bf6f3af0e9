"""Post-hoc analysis of flow runs.

Everything here works on plain arrays (the columns of a time-series CSV) so
that a stored run can be re-analysed without re-running the flow.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from .ambient import AmbientMetric, Kind
from .errors import KindError, NonpositiveSeriesError, SingularFitError
from .surface import GeometrySnapshot, RadialGraph

MIN_DECAY_SAMPLES = 10
SINGULAR_TOL = 1e-12


# -- sphere fit ---------------------------------------------------------------------

@dataclass(frozen=True)
class SphereFit:
    """Best-fit Euclidean sphere |y - center| = r0."""

    r0: float
    center: np.ndarray
    rms: float          # weighted rms of |y - center| - r0


def fit_sphere_points(points, weights=None) -> SphereFit:
    """Algebraic least-squares sphere through ``points`` (..., 3).

    Minimizes sum w (|y - a|^2 - r0^2)^2, which is linear in (a, beta) with
    beta = r0^2 - |a|^2.  Points are centred and scaled first so the solve is
    translation equivariant to rounding.
    """
    y = np.asarray(points, dtype=float).reshape(-1, 3)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float).ravel()
    w = w / w.sum()
    shift = w @ y
    z = y - shift
    scale = math.sqrt(float(w @ (z * z).sum(axis=1))) or 1.0
    z = z / scale
    sw = np.sqrt(w)[:, None]
    design = np.hstack([2.0 * z, np.ones((len(z), 1))]) * sw
    rhs = (z * z).sum(axis=1) * sw[:, 0]
    sv = np.linalg.svd(design, compute_uv=False)
    if not sv[-1] > SINGULAR_TOL * sv[0]:
        raise SingularFitError("sphere fit is singular (nodes nearly coplanar)")
    sol = np.linalg.lstsq(design, rhs, rcond=None)[0]
    a = sol[:3]
    r2 = sol[3] + a @ a
    if not r2 > 0.0:
        raise SingularFitError("sphere fit produced a non-positive radius")
    r0 = math.sqrt(r2) * scale
    center = a * scale + shift
    dist = np.linalg.norm(y - center, axis=1) - r0
    return SphereFit(r0, center, math.sqrt(float(w @ dist**2)))


def fit_sphere(s: RadialGraph) -> SphereFit:
    """Sphere fit of the graph nodes, weighted by the solid-angle quadrature."""
    return fit_sphere_points(s.embed()[0], s.grid.weights)


# -- Schwarzschild CMC expansion ----------------------------------------------------

@dataclass(frozen=True)
class CmcResidual:
    """H - 2/r0 + 4m/r0^2 - 6m<a, nu_e>/r0^3 over the nodes.

    ``max_residual`` is the max-norm; ``dipole`` is the amplitude of the l = 1
    part, the part the offset term is meant to remove.  The ``*_no_offset``
    fields repeat both without the offset term.
    """

    residual: np.ndarray
    max_residual: float
    dipole: float
    max_no_offset: float
    dipole_no_offset: float
    band: float

    @property
    def within_band(self):
        return self.max_residual <= self.band


def euclidean_normal(snap: GeometrySnapshot):
    """Unit normal with respect to the flat background, oriented like nu."""
    n = np.cross(snap.first.Ft, snap.first.Fp)
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    flip = np.sign((n * snap.nu).sum(axis=-1))
    return n * flip[..., None]


def cmc_expansion_residual(fit: SphereFit, snap: GeometrySnapshot, m=None, band_c=10.0,
                           sigma=None) -> CmcResidual:
    """Compare H with the large-sphere expansion of the mean curvature.

    ``m`` defaults to the ambient mass; ``sigma`` (for the band c sigma^-3)
    defaults to the fitted radius.
    """
    amb = snap.ambient
    if amb.kind is not Kind.SCHWARZSCHILD:
        raise KindError("the CMC expansion applies to Schwarzschild ambients only")
    m = amb.m if m is None else float(m)
    r0, a = fit.r0, fit.center
    sigma = r0 if sigma is None else float(sigma)
    ne = euclidean_normal(snap)
    base = snap.H - 2.0 / r0 + 4.0 * m / r0**2
    full = base - 6.0 * m * (ne @ a) / r0**3

    # dipole amplitude: 3/(4 pi) times |int f n_e| over the unit sphere about the fit;
    # flat area element / r0^2 stands in for the solid angle seen from the fit center
    dirs = (snap.F - a) / np.linalg.norm(snap.F - a, axis=-1, keepdims=True)
    n = np.cross(snap.first.Ft, snap.first.Fp)
    wq = np.linalg.norm(n, axis=-1) / snap.grid.sin_theta * snap.grid.weights / r0**2

    def dipole(f):
        return float(np.linalg.norm(0.75 / np.pi * np.einsum("ij,ijk->k", wq * f, dirs)))

    return CmcResidual(full, float(np.max(np.abs(full))), dipole(full),
                       float(np.max(np.abs(base))), dipole(base), band_c * sigma**-3.0)


# -- exponential decay fits ---------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    """value ~ amplitude * exp(-rate * t) on the window [t1, t2]."""

    rate: float
    amplitude: float
    t1: float
    t2: float
    r_squared: float
    samples: int


def default_window(t, fraction=0.6):
    """The last ``fraction`` of the time span covered by ``t``."""
    t = np.asarray(t, dtype=float)
    t0, t1 = float(t.min()), float(t.max())
    return t1 - fraction * (t1 - t0), t1


def fit_decay(t, values, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Least-squares line through log(values) against t on ``window``."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is None:
        window = default_window(t)
    sel = (t >= window[0]) & (t <= window[1])
    ts, vs = t[sel], v[sel]
    if len(ts) < MIN_DECAY_SAMPLES:
        raise ValueError(f"decay fit needs at least {MIN_DECAY_SAMPLES} samples, got {len(ts)}")
    if not np.all(vs > 0.0):
        raise NonpositiveSeriesError("decay fit needs a positive series on the window")
    lr = stats.linregress(ts, np.log(vs))
    r2 = min(1.0, max(0.0, float(lr.rvalue) ** 2))
    return DecayFit(-float(lr.slope), math.exp(lr.intercept), float(ts[0]), float(ts[-1]),
                    r2, len(ts))


# -- Euclidean lemma bounds ---------------------------------------------------------

@dataclass(frozen=True)
class LemmaBounds:
    """Bounds on h, h0 and H in terms of the measured decay constant eps."""

    gamma: float
    alpha: float
    eps: float
    h_lower: float          # C1
    h_upper: float
    h0_upper: float         # C2
    h_ok: bool
    h0_ok: bool
    H_ok: bool
    first_violation: Optional[float]

    @property
    def ok(self):
        return self.h_ok and self.h0_ok and self.H_ok


def lemma_bounds_monitor(t, h, h0, max_Aring, min_H, max_H, gamma=None, alpha=None,
                         eps=None, rtol=1e-12) -> LemmaBounds:
    """Check the a-priori bounds on h, h0 and H along a Euclidean run.

    gamma defaults to min H at the first record, alpha to gamma^2 / 8 and eps
    to the run value max over records of
    max(max|A°|, max|H - h0|^2) * exp(alpha t).  ``rtol`` absorbs rounding
    when eps vanishes (round spheres).
    """
    t, h, h0 = (np.asarray(x, dtype=float) for x in (t, h, h0))
    A, lo_H, hi_H = (np.asarray(x, dtype=float) for x in (max_Aring, min_H, max_H))
    gamma = float(lo_H[0]) if gamma is None else float(gamma)
    alpha = gamma**2 / 8.0 if alpha is None else float(alpha)
    dev = np.maximum(hi_H - h0, h0 - lo_H)
    if eps is None:
        eps = float(np.max(np.maximum(A, dev**2) * np.exp(alpha * t)))
    e52 = eps**2.5
    c1 = h[0] * math.exp(-eps / alpha) - e52 * 2.0 / (5.0 * alpha) * math.exp(eps / alpha)
    h_up = h[0] + 2.0 * e52 / (5.0 * alpha)
    if c1 > 0.0:
        c2 = math.exp(2.0 * e52 / (5.0 * alpha * c1) + eps / (2.0 * alpha)) * (
            h0[0] + 2.0 * eps**3 / (3.0 * alpha * c1))
    else:
        c2 = math.inf
    tol = rtol * max(1.0, abs(h[0]))
    bad_h = (h < c1 - tol) | (h > h_up + tol)
    bad_h0 = h0 > c2 + tol
    root = math.sqrt(eps)
    bad_H = (lo_H < c1 - root - tol) | (hi_H > c2 + root + tol)
    bad = bad_h | bad_h0 | bad_H
    first = float(t[np.argmax(bad)]) if bad.any() else None
    return LemmaBounds(gamma, alpha, eps, c1, h_up, c2, not bad_h.any(), not bad_h0.any(),
                       not bad_H.any(), first)


# -- Schwarzschild monitors ---------------------------------------------------------

@dataclass(frozen=True)
class BsigmaCheck:
    """Membership of one surface in the round class B_sigma(B1, B2, B3)."""

    sigma: float
    B1: float
    B2: float
    B3: float
    max_r_dev: float
    Aring_scaled: float     # max|A°| sigma^3
    grad_scaled: float      # max|grad A°| sigma^4

    @property
    def in_B1(self):
        return self.max_r_dev <= self.B1

    @property
    def in_B2(self):
        return self.Aring_scaled <= self.B2

    @property
    def in_B3(self):
        return self.grad_scaled <= self.B3

    @property
    def member(self):
        return self.in_B1 and self.in_B2 and self.in_B3


@dataclass(frozen=True)
class SchwarzschildMonitors:
    checks: List[BsigmaCheck]
    r0_dev: np.ndarray          # |r0(t) - sigma|
    max_r: np.ndarray
    C0: float
    r0_band: float              # c (C0 + B2 + B3)
    max_r_band: Optional[float]  # sigma + c (1/m + 1)(C0^2 + B2 + B3); None when m = 0
    degenerate: bool            # m = 0: the mass-dependent bands are undefined

    @property
    def r0_within(self):
        return bool(np.all(self.r0_dev <= self.r0_band))

    @property
    def max_r_within(self):
        if self.max_r_band is None:
            return None
        return bool(np.all(self.max_r <= self.max_r_band))

    @property
    def all_members(self):
        return all(c.member for c in self.checks)


def ambient_constant(ambient: AmbientMetric):
    """C0 = max(1, m, C1, C2, C3) from the sampled perturbation decay constants."""
    m = ambient.m if ambient.kind is Kind.SCHWARZSCHILD else 0.0
    consts = ambient.perturbation_constants() if ambient.kind is Kind.SCHWARZSCHILD else ()
    return max(1.0, m, *consts)


def schwarzschild_monitors(r0, max_r, max_r_dev, max_Aring, max_gradAring, sigma, m,
                           C0=1.0, B1=2.0, B2=100.0, B3=100.0, band_c=10.0):
    """Per-record B_sigma checks and the radius bands for a Schwarzschild run."""
    r0, max_r = np.asarray(r0, dtype=float), np.asarray(max_r, dtype=float)
    checks = [BsigmaCheck(sigma, B1, B2, B3, float(d), float(a) * sigma**3, float(g) * sigma**4)
              for d, a, g in zip(max_r_dev, max_Aring, max_gradAring)]
    degenerate = not m > 0.0
    r_band = band_c * (C0 + B2 + B3)
    max_band = None if degenerate else sigma + band_c * (1.0 / m + 1.0) * (C0**2 + B2 + B3)
    return SchwarzschildMonitors(checks, np.abs(r0 - sigma), max_r, C0, r_band, max_band,
                                 degenerate)


# -- run analysis -------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisSettings:
    band_c: float = 10.0
    B1: float = 2.0
    B2: float = 100.0
    B3: float = 100.0
    fit_fraction: float = 0.6
    sigma: Optional[float] = None


@dataclass
class AnalysisReport:
    values: Dict[str, object] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def put(self, key, value):
        self.values[key] = value

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(("quantity", "value"))
            for k, v in self.values.items():
                wr.writerow((k, _fmt_value(v)))

    def summary(self):
        width = max((len(k) for k in self.values), default=0)
        lines = [f"{k.ljust(width)}  {_fmt_value(v)}" for k, v in self.values.items()]
        return "\n".join(lines + self.notes) + "\n"


def _fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def _try_decay(report, name, t, v, fraction):
    try:
        fit = fit_decay(t, v, default_window(t, fraction) if len(t) else None)
    except (ValueError, NonpositiveSeriesError) as exc:
        report.notes.append(f"{name} decay fit skipped: {exc}")
        return None
    report.put(f"{name}_rate", fit.rate)
    report.put(f"{name}_r2", fit.r_squared)
    report.put(f"{name}_window", f"{fit.t1:.6g}..{fit.t2:.6g}")
    return fit


def analyze_run(columns, ambient: AmbientMetric, settings: AnalysisSettings = AnalysisSettings(),
                final_snapshot: Optional[GeometrySnapshot] = None) -> AnalysisReport:
    """Analysis of a run given its time-series columns (and optionally the final surface)."""
    rep = AnalysisReport()
    t = np.asarray(columns["t"], dtype=float)
    rep.put("records", len(t))
    if len(t) == 0:
        rep.notes.append("no monitored records")
        return rep
    sigma = settings.sigma
    if sigma is None:
        sigma = math.sqrt(float(columns["area"][0]) / (4.0 * math.pi))
    rep.put("sigma", sigma)
    rep.put("t_final", float(t[-1]))
    rep.put("area_drift_max", float(np.max(np.abs(columns["area_drift"]))))
    rep.put("identity_h_max", float(np.max(columns["identity_h"])))
    rep.put("identity_h0_max", float(np.max(columns["identity_h0"])))
    rep.put("final_max_Aring", float(columns["max_Aring"][-1]))
    h0 = np.asarray(columns["h0"], dtype=float)
    rep.put("final_H_spread", float(max(columns["maxH"][-1] - h0[-1], h0[-1] - columns["minH"][-1])
                                    / h0[-1]))
    gamma = float(columns["minH"][0])
    rep.put("gamma", gamma)
    rep.put("alpha", gamma**2 / 8.0)
    if ambient.kind is Kind.EUCLIDEAN:
        fit_A = _try_decay(rep, "max_Aring", t, columns["max_Aring"], settings.fit_fraction)
        if fit_A is not None:
            rep.put("max_Aring_rate_ge_alpha", fit_A.rate >= gamma**2 / 8.0)
        lb = lemma_bounds_monitor(t, columns["h"], h0, columns["max_Aring"], columns["minH"],
                                  columns["maxH"])
        rep.put("lemma_eps", lb.eps)
        rep.put("lemma_h_lower", lb.h_lower)
        rep.put("lemma_h_upper", lb.h_upper)
        rep.put("lemma_h0_upper", lb.h0_upper)
        rep.put("lemma_bounds_ok", lb.ok)
        rep.put("lemma_first_violation", lb.first_violation)

    if ambient.kind is Kind.SCHWARZSCHILD or ambient.kind is Kind.EUCLIDEAN:
        m = ambient.m if ambient.kind is Kind.SCHWARZSCHILD else 0.0
        fit_q = _try_decay(rep, "h0_over_h_minus_1", t, columns["h0_over_h_minus_1"],
                           settings.fit_fraction)
        if fit_q is not None and m > 0.0:
            rep.put("h0_over_h_minus_1_rate_ref", 6.0 * m / sigma**3)
        if "r0" in columns:
            mon = schwarzschild_monitors(columns["r0"], columns["max_r"], columns["max_r_dev"],
                                         columns["max_Aring"], columns["max_gradAring"], sigma, m,
                                         ambient_constant(ambient), settings.B1, settings.B2,
                                         settings.B3, settings.band_c)
            rep.put("r0_dev_max", float(np.max(mon.r0_dev)))
            rep.put("r0_band", mon.r0_band)
            rep.put("r0_within_band", mon.r0_within)
            rep.put("max_r_max", float(np.max(mon.max_r)))
            rep.put("max_r_band", mon.max_r_band)
            rep.put("max_r_within_band", mon.max_r_within)
            rep.put("bsigma_all", mon.all_members)
            last = mon.checks[-1]
            rep.put("bsigma_final", f"{int(last.in_B1)}{int(last.in_B2)}{int(last.in_B3)}")
            if mon.degenerate:
                rep.notes.append("m = 0: mass-dependent bands skipped")

    if final_snapshot is not None:
        fit = fit_sphere(final_snapshot.surface)
        rep.put("final_r0", fit.r0)
        rep.put("final_center", " ".join(f"{c:.17g}" for c in fit.center))
        rep.put("final_fit_rms", fit.rms)
        if ambient.kind is Kind.SCHWARZSCHILD:
            cmc = cmc_expansion_residual(fit, final_snapshot, band_c=settings.band_c, sigma=sigma)
            rep.put("cmc_residual_max", cmc.max_residual)
            rep.put("cmc_band", cmc.band)
            rep.put("cmc_within_band", cmc.within_band)
            rep.put("cmc_dipole", cmc.dipole)
            rep.put("cmc_dipole_no_offset", cmc.dipole_no_offset)
    return rep
