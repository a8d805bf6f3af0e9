"""Discrete geometry of radial graphs F = a + rho(theta, phi) omega(theta, phi).

Derivatives of ``rho`` come from the 4th-order grid stencils; derivatives of
``omega`` are analytic, so spheres centred at ``a`` are represented exactly.
All integrals use the solid-angle quadrature of :class:`~apmcf.grid.GridSpec`
times the area density ``sqrt(det g) / sin(theta)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from .ambient import AmbientMetric, Kind
from .errors import DegenerateSurfaceError, DomainError, NonpositiveMeanCurvatureError
from .grid import GridSpec

RADIAL_NODES = 32
_GL_S, _GL_W = np.polynomial.legendre.leggauss(RADIAL_NODES)


_EYE3 = np.eye(3)


@dataclass(frozen=True)
class RadialGraph:
    """Closed star-shaped surface ``a + rho * omega`` sampled on ``grid``."""

    rho: np.ndarray
    grid: GridSpec
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        if rho.shape != self.grid.shape:
            raise ValueError(f"rho has shape {rho.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(rho)) or np.any(rho <= 0.0):
            raise ValueError("rho must be finite and positive")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))

    @classmethod
    def sphere(cls, radius, grid, center=(0.0, 0.0, 0.0)):
        return cls(np.full(grid.shape, float(radius)), grid, np.asarray(center, float))

    @classmethod
    def from_function(cls, func, grid, center=(0.0, 0.0, 0.0)):
        th, ph = grid.mesh
        return cls(func(th, ph), grid, np.asarray(center, float))

    @classmethod
    def shifted_sphere(cls, radius, offset, grid):
        """Euclidean sphere of ``radius`` centred at ``offset``, graphed about the origin."""
        c = np.asarray(offset, float)
        w = grid.frame["w"]
        cw = w @ c
        rho = cw + np.sqrt(cw**2 - c @ c + radius**2)
        return cls(rho, grid)

    def with_rho(self, rho):
        return RadialGraph(rho, self.grid, self.center)

    def embed(self):
        """Chart points F and radial directions omega, each of shape (Nt, Np, 3)."""
        w = self.grid.frame["w"]
        return self.center + self.rho[..., None] * w, w


def _to_cartesian(grid, comps):
    """Vector with components along (omega, e_theta, e_phi) as a (..., 3) array."""
    fr = grid.frame
    vw, vt, vp = comps
    # frame["p"] is d(omega)/d(phi) = sin(theta) e_phi
    vp = vp / grid.sin_theta
    return vw[..., None] * fr["w"] + vt[..., None] * fr["t"] + vp[..., None] * fr["p"]


class _Vectors:
    """Per-node vectors kept either as Cartesian arrays or as frame components.

    Frame components are converted on first access.
    """

    def __init__(self, grid, **vectors):
        self._grid = grid
        self._raw = vectors
        self._cart = {}

    def __getitem__(self, name):
        if name not in self._cart:
            v = self._raw[name]
            self._cart[name] = _to_cartesian(self._grid, v) if isinstance(v, tuple) else v
        return self._cart[name]


@dataclass
class FirstFundamental:
    """Induced metric data.  ``F, Ft, Fp, nu`` are (..., 3) chart-component arrays."""

    vectors: _Vectors
    rho_t: np.ndarray
    rho_p: np.ndarray
    rho_tt: np.ndarray
    rho_tp: np.ndarray
    rho_pp: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    sqrt_det_g: np.ndarray
    nu_dot_omega: np.ndarray
    w: np.ndarray
    omega: Optional[np.ndarray] = None     # conformal factor when P = 0
    gbar_full: Optional[np.ndarray] = None
    dgbar: Optional[np.ndarray] = None     # d_c gbar_ab at F (generic path only)

    F = property(lambda self: self.vectors["F"])
    Ft = property(lambda self: self.vectors["Ft"])
    Fp = property(lambda self: self.vectors["Fp"])
    nu = property(lambda self: self.vectors["nu"])

    @cached_property
    def gbar(self):
        if self.gbar_full is not None:
            return self.gbar_full
        return self.omega[..., None, None] * _EYE3

    @property
    def area(self):
        return float(np.sum(self.w))


@dataclass
class SecondFundamental:
    vectors: _Vectors              # coordinate second derivatives Ftt, Ftp, Fpp
    first: FirstFundamental
    ambient: AmbientMetric
    h: np.ndarray
    H: np.ndarray
    Aring: np.ndarray
    Aring_sq: np.ndarray
    A_sq: np.ndarray
    E2: np.ndarray

    @cached_property
    def D(self):
        """Covariant second derivatives ``D[..., i, j, :]`` of the immersion."""
        v, f, g = self.vectors, self.first, self.ambient
        Ftt, Ftp, Fpp = v["Ftt"], v["Ftp"], v["Fpp"]
        X, Y = f.Ft, f.Fp
        if not g.is_flat:
            Ftt = Ftt + g.connection(f.F, X, X, check=False)
            Ftp = Ftp + g.connection(f.F, X, Y, check=False)
            Fpp = Fpp + g.connection(f.F, Y, Y, check=False)
        return np.stack([np.stack([Ftt, Ftp], axis=-2), np.stack([Ftp, Fpp], axis=-2)], axis=-3)


@dataclass
class GeometrySnapshot:
    """Per-node geometry of a radial graph in an ambient metric."""

    surface: RadialGraph
    ambient: AmbientMetric
    first: FirstFundamental
    second: SecondFundamental

    def __getattr__(self, name):
        # flatten access: snap.H, snap.nu, snap.w ...
        for part in ("first", "second"):
            obj = self.__dict__.get(part)
            if obj is not None and hasattr(obj, name):
                return getattr(obj, name)
        raise AttributeError(name)

    @property
    def grid(self):
        return self.surface.grid

    def integrate(self, f):
        """Surface integral of a per-node scalar."""
        return float(np.sum(self.first.w * f))


def _sym2(a00, a01, a11):
    out = np.empty(a00.shape + (2, 2))
    out[..., 0, 0], out[..., 1, 1] = a00, a11
    out[..., 0, 1] = out[..., 1, 0] = a01
    return out


def _derivatives(s: RadialGraph):
    grid, rho = s.grid, s.rho
    rp, rpp = grid.phi_derivatives(rho)
    rt, rtt = grid.theta_derivatives(rho)
    return rt, rp, rtt, grid.d_theta(rp), rpp


def _center_frame(s: RadialGraph):
    """Components of the graph centre along (omega, e_theta, e_phi)."""
    a = s.center
    if not np.any(a):
        return 0.0, 0.0, 0.0
    fr = s.grid.frame
    return fr["w"] @ a, fr["t"] @ a, (fr["p"] @ a) / s.grid.sin_theta


def first_fundamental(s: RadialGraph, g: AmbientMetric) -> FirstFundamental:
    """Induced metric, outward unit normal and area weights."""
    grid = s.grid
    rho = s.rho
    rt, rp, rtt, rtp, rpp = _derivatives(s)
    st = grid.sin_theta
    if not g.is_conformal:
        return _first_generic(s, g, (rt, rp, rtt, rtp, rpp))
    # Orthonormal frame (omega, e_theta, e_phi):
    #   F_theta = (rho_t, rho, 0),  F_phi = (rho_p, 0, rho sin)
    #   F_theta x F_phi = rho (rho sin, -rho_t sin, -rho_p)
    aw, at, ap = _center_frame(s)
    xw = aw + rho
    r = np.sqrt(xw * xw + at * at + ap * ap) if np.any(s.center) else rho
    if g.is_flat:
        om = np.ones_like(rho)
        root = om
    else:
        om = g.radial_conformal(r)[0]
        root = np.sqrt(om)
    g00 = om * (rt * rt + rho * rho)
    g01 = om * (rt * rp)
    g11 = om * (rp * rp + (rho * st) ** 2)
    det = g00 * g11 - g01 * g01
    if np.any(~(det > 0.0)):
        raise DegenerateSurfaceError("induced metric is not positive definite")
    nw, nt, np_ = rho * st, -rt * st, -rp
    nabs = np.sqrt(nw * nw + nt * nt + np_ * np_)
    scale = 1.0 / (root * nabs)
    nu = (nw * scale, nt * scale, np_ * scale)
    sq = np.sqrt(det)
    F = (xw, at + 0.0 * rho, ap + 0.0 * rho)
    vec = _Vectors(grid, F=F, Ft=(rt, rho, 0.0 * rho), Fp=(rp, 0.0 * rho, rho * st), nu=nu)
    return FirstFundamental(
        vectors=vec, rho_t=rt, rho_p=rp, rho_tt=rtt, rho_tp=rtp, rho_pp=rpp,
        g=_sym2(g00, g01, g11), ginv=_sym2(g11 / det, -g01 / det, g00 / det),
        sqrt_det_g=sq, nu_dot_omega=root * nw / nabs, w=sq / st * grid.weights, omega=om,
    )


def _mv(m, v):
    """Stacked 3x3 matrix times stacked 3-vector, (..., 3, 3) @ (..., 3)."""
    return np.matmul(m, v[..., None])[..., 0]


def _first_generic(s, g, derivs):
    grid = s.grid
    fr = grid.frame
    rho = s.rho[..., None]
    rt, rp, rtt, rtp, rpp = derivs
    w = fr["w"]
    F = s.center + rho * w
    Ft = rt[..., None] * w + rho * fr["t"]
    Fp = rp[..., None] * w + rho * fr["p"]
    n = np.cross(Ft, Fp)
    gbar, dgbar = g.metric_and_derivatives_at(F)
    lt, lp = _mv(gbar, Ft), _mv(gbar, Fp)
    g00 = np.sum(lt * Ft, axis=-1)
    g01 = np.sum(lt * Fp, axis=-1)
    g11 = np.sum(lp * Fp, axis=-1)
    det = g00 * g11 - g01 * g01
    if np.any(~(det > 0.0)):
        raise DegenerateSurfaceError("induced metric is not positive definite")
    # the covector n annihilates Ft and Fp; raising it gives the normal direction
    nu_raw = np.linalg.solve(gbar, n[..., None])[..., 0]
    nn = np.sqrt(np.sum(n * nu_raw, axis=-1))
    sq = np.sqrt(det)
    vec = _Vectors(grid, F=F, Ft=Ft, Fp=Fp, nu=nu_raw / nn[..., None])
    return FirstFundamental(
        vectors=vec, rho_t=rt, rho_p=rp, rho_tt=rtt, rho_tp=rtp, rho_pp=rpp,
        g=_sym2(g00, g01, g11), ginv=_sym2(g11 / det, -g01 / det, g00 / det),
        sqrt_det_g=sq, nu_dot_omega=np.sum(n * w, axis=-1) / nn,
        w=sq / grid.sin_theta * grid.weights, gbar_full=gbar, dgbar=dgbar,
    )


def _finish_second(first, g, vectors, h00, h01, h11):
    gi, gm = first.ginv, first.g
    i00, i01, i11 = gi[..., 0, 0], gi[..., 0, 1], gi[..., 1, 1]
    H = i00 * h00 + 2.0 * i01 * h01 + i11 * h11
    A00 = h00 - 0.5 * H * gm[..., 0, 0]
    A01 = h01 - 0.5 * H * gm[..., 0, 1]
    A11 = h11 - 0.5 * H * gm[..., 1, 1]
    # |A°|^2 = tr((g^-1 A°)^2) for symmetric 2x2 tensors
    m00 = i00 * A00 + i01 * A01
    m01 = i00 * A01 + i01 * A11
    m10 = i01 * A00 + i11 * A01
    m11 = i01 * A01 + i11 * A11
    Aring_sq = m00 * m00 + 2.0 * m01 * m10 + m11 * m11
    E2 = (h00 * h11 - h01 * h01) / (first.sqrt_det_g**2)
    return SecondFundamental(
        vectors=vectors, first=first, ambient=g, h=_sym2(h00, h01, h11), H=H,
        Aring=_sym2(A00, A01, A11), Aring_sq=Aring_sq, A_sq=Aring_sq + 0.5 * H**2, E2=E2)


def second_fundamental(s: RadialGraph, g: AmbientMetric, first: FirstFundamental) -> SecondFundamental:
    """Second fundamental form h_ij = -<D_i d_j F, nu>, H, |A°|^2 and E2 = k1 k2."""
    f = first
    rho = s.rho
    rt, rp = f.rho_t, f.rho_p
    if not g.is_conformal:
        return _second_generic(s, g, f)
    st = s.grid.sin_theta
    ct = s.grid.cos_theta
    # frame components of the coordinate second derivatives
    Ftt = (f.rho_tt - rho, 2.0 * rt, 0.0 * rho)
    Ftp = (f.rho_tp, rp, rt * st + rho * ct)
    Fpp = (f.rho_pp - rho * st * st, -rho * st * ct, 2.0 * rp * st)
    nu = f.vectors._raw["nu"]
    om = f.omega

    def proj(v):
        return -om * (v[0] * nu[0] + v[1] * nu[1] + v[2] * nu[2])

    h00, h01, h11 = proj(Ftt), proj(Ftp), proj(Fpp)
    if not g.is_flat:
        # Gamma(X, Y) = X(u) Y + Y(u) X - <X, Y> grad u with u = ln psi; only the
        # last term has a normal part
        x = f.vectors._raw["F"]
        r = np.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
        su = g.radial_conformal(r, check=False)[1]
        du_nu = su * (x[0] * nu[0] + x[1] * nu[1] + x[2] * nu[2])
        h00 = h00 + f.g[..., 0, 0] * du_nu
        h01 = h01 + f.g[..., 0, 1] * du_nu
        h11 = h11 + f.g[..., 1, 1] * du_nu
    vec = _Vectors(s.grid, Ftt=Ftt, Ftp=Ftp, Fpp=Fpp)
    return _finish_second(f, g, vec, h00, h01, h11)


def _second_generic(s, g, f):
    fr = s.grid.frame
    rho = s.rho[..., None]
    rt, rp = f.rho_t[..., None], f.rho_p[..., None]
    w = fr["w"]
    Ftt = f.rho_tt[..., None] * w + 2.0 * rt * fr["t"] + rho * fr["tt"]
    Ftp = f.rho_tp[..., None] * w + rt * fr["p"] + rp * fr["t"] + rho * fr["tp"]
    Fpp = f.rho_pp[..., None] * w + 2.0 * rp * fr["p"] + rho * fr["pp"]
    nu, Ft, Fp = f.nu, f.Ft, f.Fp
    gn = _mv(f.gbar, nu)
    # <Gamma(X, Y), nu> = Gamma_{d,ab} X^a Y^b nu^d with the lowered symbols
    # Gamma_{d,ab} = (d_a g_db + d_b g_da - d_d g_ab) / 2, so no inverse is needed
    dg = f.dgbar if f.dgbar is not None else g.metric_derivatives_at(f.F, check=False)
    lead = dg.shape[:-3]

    def along(v):       # d_v g, a stacked 3x3 matrix
        return np.matmul(v[..., None, :], dg.reshape(*lead, 3, 9)).reshape(*lead, 3, 3)

    Dt, Dp, Dn = along(Ft), along(Fp), along(nu)
    Dt_n, Dp_n = _mv(Dt, nu), _mv(Dp, nu)

    def h_of(D, X, Y, DX_n, DY_n):
        gam = 0.5 * (np.sum(DX_n * Y, axis=-1) + np.sum(DY_n * X, axis=-1)
                     - np.sum(_mv(Dn, X) * Y, axis=-1))
        return -(np.sum(D * gn, axis=-1) + gam)

    h00 = h_of(Ftt, Ft, Ft, Dt_n, Dt_n)
    h01 = h_of(Ftp, Ft, Fp, Dt_n, Dp_n)
    h11 = h_of(Fpp, Fp, Fp, Dp_n, Dp_n)
    vec = _Vectors(s.grid, Ftt=Ftt, Ftp=Ftp, Fpp=Fpp)
    return _finish_second(f, g, vec, h00, h01, h11)


def snapshot(s: RadialGraph, g: AmbientMetric) -> GeometrySnapshot:
    first = first_fundamental(s, g)
    return GeometrySnapshot(s, g, first, second_fundamental(s, g, first))


def induced_christoffel(first: FirstFundamental, second: SecondFundamental):
    """Gamma^k_ij of the induced metric from the tangential part of D_i d_j F."""
    gt = np.einsum("...ab,...b->...a", first.gbar, first.Ft)
    gp = np.einsum("...ab,...b->...a", first.gbar, first.Fp)
    low = np.stack([np.einsum("...ija,...a->...ij", second.D, gt),
                    np.einsum("...ija,...a->...ij", second.D, gp)], axis=-3)
    return np.einsum("...kl,...lij->...kij", first.ginv, low)


def gradient(snap: GeometrySnapshot, f):
    """Coordinate gradient (d_theta f, d_phi f) of a per-node scalar."""
    grid = snap.grid
    return grid.d_theta(f), grid.d_phi(f)


def laplace_beltrami(s: RadialGraph, g: AmbientMetric, first: FirstFundamental, f):
    """Divergence-form Laplace-Beltrami operator of a per-node scalar."""
    grid = s.grid
    ft, fp = grid.d_theta(f), grid.d_phi(f)
    gi = first.ginv
    # signed density: sin(theta) continues as an odd function across the poles
    J = first.sqrt_det_g
    flux_t = J * (gi[..., 0, 0] * ft + gi[..., 0, 1] * fp)
    flux_p = J * (gi[..., 1, 0] * ft + gi[..., 1, 1] * fp)
    return (grid.d_theta(flux_t, parity=1.0) + grid.d_phi(flux_p)) / J


def covariant_grad_A_norm(s: RadialGraph, g: AmbientMetric, first: FirstFundamental,
                          second: SecondFundamental):
    """Pointwise |nabla A°| from stencil derivatives of the A° components."""
    grid = s.grid
    A = second.Aring
    dA = np.empty(grid.shape + (2, 2, 2))
    parity = {(0, 0): 1.0, (0, 1): -1.0, (1, 0): -1.0, (1, 1): 1.0}
    for (i, j), par in parity.items():
        dA[..., 0, i, j] = grid.d_theta(A[..., i, j], parity=par)
        dA[..., 1, i, j] = grid.d_phi(A[..., i, j])
    gam = induced_christoffel(first, second)
    nab = (dA
           - np.einsum("...lki,...lj->...kij", gam, A)
           - np.einsum("...lkj,...il->...kij", gam, A))
    gi = first.ginv
    sq = np.einsum("...ka,...ib,...jc,...kij,...abc->...", gi, gi, gi, nab, nab)
    return np.sqrt(np.maximum(sq, 0.0))


@dataclass(frozen=True)
class GlobalTerms:
    area: float
    int_H: float
    int_H2: float
    int_E2: float
    int_HE2: float
    int_dev_h: float       # integral of (H - h)^2
    int_dev_h0: float      # integral of (H - h0)^2
    volume: float

    @property
    def h(self):
        return self.int_H / self.area

    @property
    def h0(self):
        return self.int_H2 / self.int_H

    @property
    def h1(self):
        return self.int_HE2 / self.int_E2 if self.int_E2 > 0 else float("nan")

    @property
    def h0_over_h_minus_1(self):
        """(h0 - h) / h evaluated without cancellation via int (H - h)^2."""
        return self.int_dev_h / (self.h * self.int_H)

    def global_term(self, k):
        return {-1: self.h, 0: self.h0, 1: self.h1}[k]


def enclosed_volume(s: RadialGraph, g: AmbientMetric, r_inner: Optional[float] = None):
    """Volume of the region bounded by the graph, by radial Gauss-Legendre rules.

    For the Schwarzschild kind the region inside the coordinate sphere
    ``|x| = r_inner`` is excluded.
    """
    grid = s.grid
    rho = s.rho
    if g.kind is Kind.EUCLIDEAN:
        return grid.integrate(rho**3 / 3.0)
    w = grid.frame["w"]
    if g.kind is Kind.SCHWARZSCHILD:
        if r_inner is None:
            raise ValueError("Schwarzschild volume needs r_inner")
        a = s.center
        aw = w @ a
        disc = aw**2 - a @ a + r_inner**2
        if a @ a >= r_inner**2:
            raise DomainError("graph centre must lie inside the inner coordinate sphere")
        s_in = -aw + np.sqrt(disc)
        if np.any(rho <= s_in):
            raise DomainError("surface crosses the inner coordinate sphere")
    else:
        s_in = np.zeros_like(rho)
    half = 0.5 * (rho - s_in)
    mid = 0.5 * (rho + s_in)
    sr = mid[..., None] + half[..., None] * _GL_S
    pts = s.center + sr[..., None] * w[..., None, :]
    dens = g.volume_density(pts) * sr**2
    radial = half * np.einsum("...k,k->...", dens, _GL_W)
    return grid.integrate(radial)


def global_terms(s: RadialGraph, g: AmbientMetric, first: FirstFundamental,
                 second: SecondFundamental, r_inner: Optional[float] = None,
                 with_volume: bool = True) -> GlobalTerms:
    """Integrals and averages over the surface.

    With ``with_volume=False`` the (comparatively costly) enclosed volume is
    left as NaN; the flow only needs it at monitored steps.
    """
    w = first.w
    H, E2 = second.H, second.E2
    area = float(np.sum(w))
    int_H = float(np.sum(w * H))
    if not int_H > 0.0:
        raise NonpositiveMeanCurvatureError(f"total mean curvature {int_H:.6g} is not positive")
    int_H2 = float(np.sum(w * H * H))
    h, h0 = int_H / area, int_H2 / int_H
    return GlobalTerms(
        area=area, int_H=int_H, int_H2=int_H2,
        int_E2=float(np.sum(w * E2)), int_HE2=float(np.sum(w * H * E2)),
        int_dev_h=float(np.sum(w * (H - h) ** 2)),
        int_dev_h0=float(np.sum(w * (H - h0) ** 2)),
        volume=enclosed_volume(s, g, r_inner) if with_volume else float("nan"),
    )


SURFACE_COLUMNS = ("theta", "phi", "rho", "H", "Aring_sq", "E2", "w")


def write_surface_csv(path, snap: Optional[GeometrySnapshot]):
    """One row per node; header only when ``snap`` is None."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(SURFACE_COLUMNS)
        if snap is None:
            return
        th, ph = snap.grid.mesh
        cols = (th, ph, snap.surface.rho, snap.H, snap.Aring_sq, snap.E2, snap.w)
        for row in zip(*(c.ravel() for c in cols)):
            wr.writerow([f"{v:.17g}" for v in row])
