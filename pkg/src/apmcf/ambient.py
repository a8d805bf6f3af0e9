"""Ambient 3-manifolds written in one Cartesian chart as g = Omega(r) delta + P(x).

All four supported geometries have a radial conformal factor Omega = psi**2:

========== ================================= ==================
kind       psi                               chart domain
========== ================================= ==================
euclidean  1                                 R^3
sphere     2 / (1 + |x|^2)  (stereographic)  R^3
hyperbolic 2 / (1 - |x|^2)  (Poincare ball)  |x| < 1
schwarz.   (1 + m / 2r)^2                    r > 0  (r > r_cut with P)
========== ================================= ==================

Only the Schwarzschild kind carries a perturbation ``P``.  Every derivative
below is closed form; nothing here differentiates numerically.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetricError, DomainError, KindError

EIG_FLOOR = 1e-12
_EYE = np.eye(3)


class Kind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    SPHERE = "sphere"
    HYPERBOLIC = "hyperbolic"
    SCHWARZSCHILD = "schwarzschild"


class Family(str, enum.Enum):
    ZERO = "zero"
    AXIAL_DEVIATORIC = "axial_deviatoric"


def _radial_parts(f, df, d2f, r):
    """Convert f(r), f'(r), f''(r) to (f, a, b) with grad f = a x and
    Hess f = a I + b x x^T."""
    a = df / r
    b = (d2f - a) / r**2
    return f, a, b


@dataclass(frozen=True)
class PerturbationSpec:
    """Traceless radial-radial perturbation ``beta chi(r) r^-2 (e e^T - I/3)``.

    ``chi(r) = exp(-r_cut / (r - r_cut))`` for r > r_cut and 0 below, which is
    smooth and makes P and its derivatives decay like r^-2, r^-3, r^-4.
    """

    family: Family = Family.ZERO
    amplitude: float = 0.0
    r_cut: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.r_cut <= 0:
            raise ValueError("r_cut must be positive")

    @property
    def is_zero(self):
        return self.family is Family.ZERO or self.amplitude == 0.0

    def _chi(self, r):
        rc = self.r_cut
        t = np.where(r > rc, r - rc, 1.0)
        inside = r > rc
        chi = np.where(inside, np.exp(-rc / t), 0.0)
        d1 = np.where(inside, chi * rc / t**2, 0.0)
        d2 = np.where(inside, chi * (rc**2 / t**4 - 2.0 * rc / t**3), 0.0)
        return chi, d1, d2

    def profiles(self, r):
        """Radial parts of q = chi r^-2 and s = chi r^-4 as (f, a, b) triples."""
        chi, c1, c2 = self._chi(r)
        q = chi / r**2
        dq = c1 / r**2 - 2.0 * chi / r**3
        d2q = c2 / r**2 - 4.0 * c1 / r**3 + 6.0 * chi / r**4
        s = chi / r**4
        ds = c1 / r**4 - 4.0 * chi / r**5
        d2s = c2 / r**4 - 8.0 * c1 / r**5 + 20.0 * chi / r**6
        return _radial_parts(q, dq, d2q, r), _radial_parts(s, ds, d2s, r)

    def value(self, x, r):
        return self.value_and_first(x, r)[0]

    def first(self, x, r):
        """d[..., g, a, b] = d_g P_ab."""
        return self.value_and_first(x, r)[1]

    def value_and_first(self, x, r):
        """P_ab and d_g P_ab from a single evaluation of the radial profiles."""
        (q, aq, _), (s, as_, _) = self.profiles(r)
        beta = self.amplitude
        xx = x[..., :, None] * x[..., None, :]
        val = beta * (s[..., None, None] * xx - (q / 3.0)[..., None, None] * _EYE)
        d = as_[..., None, None, None] * x[..., :, None, None] * xx[..., None, :, :]
        # s (delta_ga x_b + x_a delta_gb)
        sx = s[..., None] * x
        d = d + _EYE[:, :, None] * sx[..., None, None, :] + sx[..., None, :, None] * _EYE[:, None, :]
        d = d - (aq / 3.0)[..., None, None, None] * x[..., :, None, None] * _EYE
        return val, beta * d

    def second(self, x, r):
        """d2[..., g, e, a, b] = d_g d_e P_ab."""
        (q, aq, bq), (s, as_, bs) = self.profiles(r)
        beta = self.amplitude
        xx = x[..., :, None] * x[..., None, :]
        hess_s = as_[..., None, None] * _EYE + bs[..., None, None] * xx
        hess_q = aq[..., None, None] * _EYE + bq[..., None, None] * xx
        d2 = hess_s[..., :, :, None, None] * xx[..., None, None, :, :]
        # grad s_g * d_e(x_a x_b) + grad s_e * d_g(x_a x_b)
        dxx = np.einsum("ea,...b->...eab", _EYE, x) + np.einsum("...a,eb->...eab", x, _EYE)
        gs = as_[..., None] * x
        d2 = d2 + gs[..., :, None, None, None] * dxx[..., None, :, :, :]
        d2 = d2 + gs[..., None, :, None, None] * dxx[..., :, None, :, :]
        dd = np.einsum("ga,eb->geab", _EYE, _EYE) + np.einsum("ea,gb->geab", _EYE, _EYE)
        d2 = d2 + s[..., None, None, None, None] * dd
        d2 = d2 - hess_q[..., :, :, None, None] * _EYE / 3.0
        return beta * d2


ZERO_PERTURBATION = PerturbationSpec()


@dataclass(frozen=True)
class AmbientMetric:
    """One of the four supported ambient geometries.

    Parameters
    ----------
    kind : Kind or str
    m : float
        Mass parameter, Schwarzschild only (must be positive there).
    perturbation : PerturbationSpec
        Schwarzschild only.
    """

    kind: Kind = Kind.EUCLIDEAN
    m: float = 0.0
    perturbation: PerturbationSpec = field(default=ZERO_PERTURBATION)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.SCHWARZSCHILD:
            if not self.m > 0:
                raise ValueError("Schwarzschild mass m must be positive")
        else:
            if self.m != 0.0:
                raise ValueError("mass parameter only applies to the Schwarzschild kind")
            if not self.perturbation.is_zero:
                raise ValueError("perturbations only apply to the Schwarzschild kind")
        if not self.perturbation.is_zero:
            self._check_perturbation_definite()

    # -- construction helpers -------------------------------------------------
    @classmethod
    def euclidean(cls):
        return cls(Kind.EUCLIDEAN)

    @classmethod
    def sphere(cls):
        return cls(Kind.SPHERE)

    @classmethod
    def hyperbolic(cls):
        return cls(Kind.HYPERBOLIC)

    @classmethod
    def schwarzschild(cls, m, beta=0.0, r_cut=1.0):
        fam = Family.AXIAL_DEVIATORIC if beta != 0.0 else Family.ZERO
        return cls(Kind.SCHWARZSCHILD, m, PerturbationSpec(fam, beta, r_cut))

    @property
    def curvature_c(self):
        """Sectional curvature of the space forms; None for Schwarzschild."""
        return {Kind.EUCLIDEAN: 0, Kind.SPHERE: 1, Kind.HYPERBOLIC: -1}.get(self.kind)

    @property
    def is_flat(self):
        return self.kind is Kind.EUCLIDEAN

    @property
    def is_conformal(self):
        return self.perturbation.is_zero

    @property
    def min_radius(self):
        """Smallest admissible chart radius (exclusive)."""
        if self.kind is not Kind.SCHWARZSCHILD:
            return 0.0
        if self.perturbation.is_zero:
            return 0.0
        return self.perturbation.r_cut * (1.0 + 1e-6)

    # -- radial conformal factor ---------------------------------------------
    def _conformal(self, r):
        """Omega, a, b with grad Omega = a x and Hess Omega = a I + b x x^T."""
        if self.kind is Kind.EUCLIDEAN:
            one = np.ones_like(r)
            return one, 0.0 * r, 0.0 * r
        if self.kind is Kind.SPHERE:
            d = 1.0 + r**2
            return 4.0 / d**2, -16.0 / d**3, 96.0 / d**4
        if self.kind is Kind.HYPERBOLIC:
            d = 1.0 - r**2
            return 4.0 / d**2, 16.0 / d**3, 96.0 / d**4
        m = self.m
        phi = 1.0 + m / (2.0 * r)
        dphi = -m / (2.0 * r**2)
        d2phi = m / r**3
        om = phi**4
        dom = 4.0 * phi**3 * dphi
        d2om = 12.0 * phi**2 * dphi**2 + 4.0 * phi**3 * d2phi
        return _radial_parts(om, dom, d2om, r)

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(self._conformal(np.linalg.norm(x, axis=-1))[0])

    def _prepare(self, x, check=True):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != 3:
            raise ValueError("chart points must have 3 components")
        r = np.linalg.norm(x, axis=-1)
        if check:
            self._check_domain(r)
        return x, r

    def _check_domain(self, r):
        if self.kind is Kind.HYPERBOLIC and np.any(r >= 1.0):
            raise DomainError("HyperbolicChart requires |x| < 1")
        if self.kind is Kind.SCHWARZSCHILD:
            if np.any(r <= 0.0):
                raise DomainError("Schwarzschild chart requires |x| > 0")
            if not self.perturbation.is_zero and np.any(r <= self.min_radius):
                raise DomainError(
                    f"perturbed Schwarzschild chart requires |x| > {self.min_radius:.9g}")

    def _eigen_floor(self, r):
        om = self._conformal(r)[0]
        if self.perturbation.is_zero:
            return om
        (q, _, _), _ = self.perturbation.profiles(r)
        bq = self.perturbation.amplitude * q
        return np.minimum(om + 2.0 * bq / 3.0, om - bq / 3.0)

    def _check_definite(self, r):
        if np.any(self._eigen_floor(r) <= EIG_FLOOR):
            raise DegenerateMetricError("ambient metric is not positive definite")

    def _check_perturbation_definite(self):
        rc = self.perturbation.r_cut
        r = rc * (1.0 + np.geomspace(1e-6, 1e4, 4000))
        if np.any(self._eigen_floor(r) <= EIG_FLOOR):
            raise ValueError("perturbation amplitude too large: metric not positive definite")

    # -- public evaluation ----------------------------------------------------
    def metric_at(self, x, check=True):
        """Metric matrix g_ab(x); vectorised over leading axes of ``x``."""
        x, r = self._prepare(x, check)
        if check:
            self._check_definite(r)
        om = self._conformal(r)[0]
        g = om[..., None, None] * _EYE
        if not self.perturbation.is_zero:
            g = g + self.perturbation.value(x, r)
        return g

    def metric_derivatives_at(self, x, check=True):
        """Array d[..., c, a, b] = d_c g_ab(x)."""
        x, r = self._prepare(x, check)
        if check:
            self._check_definite(r)
        _, a, _ = self._conformal(r)
        d = (a[..., None] * x)[..., :, None, None] * _EYE
        if not self.perturbation.is_zero:
            d = d + self.perturbation.first(x, r)
        return d

    def metric_second_derivatives_at(self, x, check=True):
        """Array d2[..., c, e, a, b] = d_c d_e g_ab(x)."""
        x, r = self._prepare(x, check)
        _, a, b = self._conformal(r)
        hess = a[..., None, None] * _EYE + b[..., None, None] * x[..., :, None] * x[..., None, :]
        d2 = hess[..., :, :, None, None] * _EYE
        if not self.perturbation.is_zero:
            d2 = d2 + self.perturbation.second(x, r)
        return d2

    def metric_and_derivatives_at(self, x, check=True):
        """``(metric_at(x), metric_derivatives_at(x))`` in one pass."""
        x, r = self._prepare(x, check)
        om, a, _ = self._conformal(r)
        g = om[..., None, None] * _EYE
        d = (a[..., None] * x)[..., :, None, None] * _EYE
        if not self.perturbation.is_zero:
            pv, pd = self.perturbation.value_and_first(x, r)
            g, d = g + pv, d + pd
        if check:
            self._check_definite(r)
        return g, d

    def christoffel_at(self, x, check=True):
        """Levi-Civita symbols G[..., c, a, b] = Gamma^c_ab(x)."""
        g = self.metric_at(x, check)
        dg = self.metric_derivatives_at(x, check=False)
        return _christoffel(np.linalg.inv(g), dg)

    def conformal_christoffel_at(self, x, check=True):
        """Gamma from the conformal part alone, via u = ln psi.

        Gamma^c_ab = delta^c_a d_b u + delta^c_b d_a u - delta_ab d^c u.
        Equal to :meth:`christoffel_at` whenever P vanishes.
        """
        x, r = self._prepare(x, check)
        du = self._grad_log_psi(x, r)
        return (np.einsum("ca,...b->...cab", _EYE, du)
                + np.einsum("cb,...a->...cab", _EYE, du)
                - np.einsum("ab,...c->...cab", _EYE, du))

    def radial_conformal(self, r, check=True):
        """(Omega, s) at chart radii r, where grad ln(psi) = s x.

        Only meaningful for the conformally flat case (P = 0).
        """
        r = np.asarray(r, dtype=float)
        if check:
            self._check_domain(r)
            self._check_definite(r)
        om, a, _ = self._conformal(r)
        return om, 0.5 * a / om

    def _grad_log_psi(self, x, r):
        om, a, _ = self._conformal(r)
        return (0.5 * a / om)[..., None] * x

    def connection(self, x, X, Y, check=True):
        """Gamma^c_ab X^a Y^b at x, vectorised; uses the conformal shortcut when P = 0."""
        x, r = self._prepare(x, check)
        if self.is_flat:
            return np.zeros(np.broadcast_shapes(X.shape, Y.shape))
        if self.perturbation.is_zero:
            du = self._grad_log_psi(x, r)
            xu = (X * du).sum(axis=-1)
            yu = (Y * du).sum(axis=-1)
            xy = (X * Y).sum(axis=-1)
            return xu[..., None] * Y + yu[..., None] * X - xy[..., None] * du
        gam = self.christoffel_at(x, check=False)
        return np.einsum("...cab,...a,...b->...c", gam, X, Y)

    def ricci_at(self, x, check=True):
        """Ricci tensor Ric_ab(x) from closed-form second derivatives of g."""
        g = self.metric_at(x, check)
        gi = np.linalg.inv(g)
        dg = self.metric_derivatives_at(x, check=False)
        d2g = self.metric_second_derivatives_at(x, check=False)
        gam = _christoffel(gi, dg)
        # d_e Gamma^c_ab
        t = (np.einsum("...adb->...dab", dg) + np.einsum("...bad->...dab", dg) - dg)
        dt = (np.einsum("...eadb->...edab", d2g) + np.einsum("...ebad->...edab", d2g)
              - d2g)
        dgi = -np.einsum("...cp,...epq,...qd->...ecd", gi, dg, gi)
        dgam = 0.5 * (np.einsum("...ecd,...dab->...ecab", dgi, t)
                      + np.einsum("...cd,...edab->...ecab", gi, dt))
        ric = (np.einsum("...ccab->...ab", dgam)
               - np.einsum("...bcac->...ab", dgam)
               + np.einsum("...ccd,...dab->...ab", gam, gam)
               - np.einsum("...cbd,...dac->...ab", gam, gam))
        return 0.5 * (ric + np.swapaxes(ric, -1, -2))

    def _schwarzschild_k(self, r):
        # Ric of the unperturbed Schwarzschild slice: k psi^4 (delta - 3 e e^T)
        psi = 1.0 + self.m / (2.0 * r)
        return self.m / (r**3 * psi**6), psi**4

    def ricci_normal(self, x, v, check=True):
        """Ric(v, v) at x; closed forms except for perturbed Schwarzschild."""
        x, r = self._prepare(x, check)
        c = self.curvature_c
        if c is not None:
            if c == 0:
                return np.zeros(r.shape)
            om = self._conformal(r)[0]
            return 2.0 * c * om * (v * v).sum(axis=-1)
        if self.perturbation.is_zero:
            k, p4 = self._schwarzschild_k(r)
            vr = (v * x).sum(axis=-1) / r
            return k * p4 * ((v * v).sum(axis=-1) - 3.0 * vr**2)
        ric = self.ricci_at(x, check=False)
        return np.einsum("...a,...ab,...b->...", v, ric, v)

    def ricci_bound(self, x, check=True):
        """Largest |eigenvalue| of Ric relative to the metric, per point."""
        x, r = self._prepare(x, check)
        c = self.curvature_c
        if c is not None:
            return np.full(r.shape, 2.0 * abs(c))
        if self.perturbation.is_zero:
            return 2.0 * self._schwarzschild_k(r)[0]
        ric = self.ricci_at(x, check=False)
        g = self.metric_at(x, check=False)
        ev = np.linalg.eigvals(np.linalg.solve(g, ric))
        return np.abs(ev).max(axis=-1)

    def ricci_normal_estimate(self, sigma, band_c=10.0):
        """Reference value -2m/sigma^3 of Ric(nu, nu) on a large coordinate sphere.

        Returns ``(value, band)`` with ``band = band_c * sigma**-4``.  Used only
        as a monitor reference.
        """
        if self.kind is not Kind.SCHWARZSCHILD:
            raise KindError("ricci_normal_estimate needs a Schwarzschild ambient")
        lo = max(1.0, 2.0 * self.perturbation.r_cut if not self.perturbation.is_zero else 1.0)
        if not sigma > lo:
            raise DomainError(f"sigma must exceed {lo}")
        return -2.0 * self.m / sigma**3, band_c * sigma**-4.0

    def volume_density(self, x):
        """sqrt(det g) without domain checks (used by radial quadrature)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        om = self._conformal(r)[0]
        if self.perturbation.is_zero:
            return om**1.5
        (q, _, _), _ = self.perturbation.profiles(r)
        bq = self.perturbation.amplitude * q
        return np.sqrt((om + 2.0 * bq / 3.0) * (om - bq / 3.0) ** 2)

    def perturbation_constants(self, r_max=1e4):
        """Sampled sup of r^(l+2) |d^l P| for l = 0, 1, 2 along a ray.

        P is rotation-equivariant, so one ray suffices.  Returns (C1, C2, C3).
        """
        if self.perturbation.is_zero:
            return 0.0, 0.0, 0.0
        rc = self.perturbation.r_cut
        r = rc * (1.0 + np.geomspace(1e-6, r_max / rc, 3000))
        x = np.stack([r, 0.0 * r, 0.0 * r], axis=-1)
        p = self.perturbation
        c = []
        for l, arr in enumerate((p.value(x, r), p.first(x, r), p.second(x, r))):
            mag = np.abs(arr).reshape(len(r), -1).max(axis=1)
            c.append(float(np.max(mag * r ** (l + 2))))
        return tuple(c)


def _christoffel(gi, dg):
    t = np.einsum("...adb->...dab", dg) + np.einsum("...bad->...dab", dg) - dg
    return 0.5 * np.einsum("...cd,...dab->...cab", gi, t)
