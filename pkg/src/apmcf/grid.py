"""Gauss-Legendre x uniform-longitude grid on S^2 with 4th-order stencils.

Colatitude nodes are the interior Gauss-Legendre nodes, so no node sits on a
pole.  Theta stencils near a pole reach across it: the point at colatitude
-theta and longitude phi is the point (theta, phi + pi), so a padded row is a
half-turn roll of a mirrored row.  Coordinate components that are odd under
the reflection theta -> -theta (anything carrying one theta index) pick up a
sign, passed as ``parity``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import special

PAD = 3


def fd_weights(z, x, order):
    """Fornberg weights for derivatives 0..order at z from nodes x.

    Returns an array ``c`` with ``c[k] @ f(x) ~ f^(k)(z)``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((order + 1, n))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def real_sph_harm(l, m, theta, phi):
    """Real spherical harmonic with unit L2 norm over the sphere.

    m > 0 selects the cosine-type, m < 0 the sine-type function.
    """
    if abs(m) > l:
        raise ValueError(f"|m| must not exceed l (got l={l}, m={m})")
    y = special.sph_harm_y(l, abs(m), theta, phi)
    if m == 0:
        return y.real
    sign = (-1.0) ** m
    if m > 0:
        return np.sqrt(2.0) * sign * y.real
    return np.sqrt(2.0) * sign * y.imag


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid of ``n_theta`` Gauss-Legendre colatitudes by ``n_phi`` longitudes."""

    n_theta: int = 32
    n_phi: int = 64

    def __post_init__(self):
        if self.n_theta < 16:
            raise ValueError("n_theta must be at least 16")
        if self.n_phi < 2 * self.n_theta:
            raise ValueError("n_phi must be at least 2 * n_theta")
        if self.n_phi % 2:
            raise ValueError("n_phi must be even (pole continuation uses a half turn)")

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    @cached_property
    def _gl(self):
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        # ascending theta means descending cos(theta)
        return np.arccos(x[::-1]), w[::-1]

    @cached_property
    def theta(self):
        return self._gl[0]

    @cached_property
    def phi(self):
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def dphi(self):
        return 2.0 * np.pi / self.n_phi

    @cached_property
    def mesh(self):
        """(theta, phi) arrays of shape ``self.shape``."""
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    @cached_property
    def weights(self):
        """Solid-angle quadrature weights; they sum to 4 pi."""
        return np.outer(self._gl[1], np.full(self.n_phi, self.dphi))

    @cached_property
    def sin_theta(self):
        return np.sin(self.mesh[0])

    @cached_property
    def cos_theta(self):
        return np.cos(self.mesh[0])

    @cached_property
    def frame(self):
        """omega and its analytic parameter derivatives.

        Keys: ``w, t, p, tt, tp, pp`` (shape ``(*self.shape, 3)``).
        """
        th, ph = self.mesh
        st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        z = np.zeros_like(th)
        w = np.stack([st * cp, st * sp, ct], axis=-1)
        return {
            "w": w,
            "t": np.stack([ct * cp, ct * sp, -st], axis=-1),
            "p": np.stack([-st * sp, st * cp, z], axis=-1),
            "tt": -w,
            "tp": np.stack([-ct * sp, ct * cp, z], axis=-1),
            "pp": np.stack([-st * cp, -st * sp, z], axis=-1),
        }

    @cached_property
    def theta_padded(self):
        t = self.theta
        return np.concatenate([-t[PAD - 1::-1], t, 2.0 * np.pi - t[:-PAD - 1:-1]])

    @cached_property
    def _theta_stencils(self):
        tp = self.theta_padded
        w1 = np.empty((self.n_theta, 2 * PAD + 1))
        w2 = np.empty_like(w1)
        for i in range(self.n_theta):
            c = fd_weights(tp[i + PAD], tp[i:i + 2 * PAD + 1], 2)
            w1[i], w2[i] = c[1], c[2]
        return w1, w2

    @cached_property
    def theta_spacing(self):
        """Local colatitude spacing (min of the two neighbour gaps) per row."""
        tp = self.theta_padded
        d = np.diff(tp)
        return np.minimum(d[PAD - 1:PAD - 1 + self.n_theta], d[PAD:PAD + self.n_theta])

    @cached_property
    def filter_cutoff(self):
        """Highest longitudinal wavenumber kept on each ring by the polar filter.

        Keeps the effective longitude spacing no finer than at the equator.
        """
        kc = np.floor(0.5 * self.n_phi * np.sin(self.theta) + 1e-9).astype(int)
        return np.clip(kc, 1, self.n_phi // 2)

    @cached_property
    def _filter_mask(self):
        k = np.arange(self.n_phi // 2 + 1)
        return (k[None, :] <= self.filter_cutoff[:, None]).astype(float)

    # -- stencils ----------------------------------------------------------------
    def pad_theta(self, f, parity=1.0):
        """Append PAD continuation rows across each pole (axis 0)."""
        rolled = np.roll(f, self.n_phi // 2, axis=1)
        top, bottom = rolled[PAD - 1::-1], rolled[:-PAD - 1:-1]
        if parity != 1.0:
            top, bottom = parity * top, parity * bottom
        return np.concatenate([top, f, bottom], axis=0)

    @cached_property
    def _theta_matrix(self):
        """Stacked first/second derivative stencils acting on padded rows."""
        n = self.n_theta
        m = np.zeros((2 * n, n + 2 * PAD))
        w1, w2 = self._theta_stencils
        for i in range(n):
            m[i, i:i + 2 * PAD + 1] = w1[i]
            m[n + i, i:i + 2 * PAD + 1] = w2[i]
        return m

    @cached_property
    def _phi_matrix(self):
        """Circulant 4th-order stencils; ``f @ M`` gives [d_phi f, d2_phi f]."""
        n, h = self.n_phi, self.dphi
        m = np.zeros((n, 2 * n))
        taps = ((-2, 1.0, -1.0), (-1, -8.0, 16.0), (0, 0.0, -30.0), (1, 8.0, 16.0), (2, -1.0, -1.0))
        for j in range(n):
            for off, c1, c2 in taps:
                m[(j + off) % n, j] += c1 / (12.0 * h)
                m[(j + off) % n, n + j] += c2 / (12.0 * h * h)
        return m

    def _theta_apply(self, f, parity, rows):
        fp = self.pad_theta(f, parity)
        m = self._theta_matrix[rows]
        if f.ndim == 2:
            return m @ fp
        return np.tensordot(m, fp, axes=1)

    def d_theta(self, f, parity=1.0):
        return self._theta_apply(f, parity, slice(0, self.n_theta))

    def d2_theta(self, f, parity=1.0):
        return self._theta_apply(f, parity, slice(self.n_theta, None))

    def theta_derivatives(self, f, parity=1.0):
        """First and second colatitude derivatives sharing one padding."""
        both = self._theta_apply(f, parity, slice(None))
        return both[:self.n_theta], both[self.n_theta:]

    def phi_derivatives(self, f):
        """4th-order periodic first and second longitude derivatives."""
        if f.ndim != 2:
            out = np.moveaxis(np.moveaxis(f, 1, -1) @ self._phi_matrix, -1, 1)
        else:
            out = f @ self._phi_matrix
        n = self.n_phi
        return out[:, :n], out[:, n:]

    def d_phi(self, f):
        return self.phi_derivatives(f)[0]

    def d2_phi(self, f):
        return self.phi_derivatives(f)[1]

    def polar_filter(self, f):
        """Drop longitudinal Fourier modes above :attr:`filter_cutoff` ring by ring."""
        spec = np.fft.rfft(f, axis=1)
        mask = self._filter_mask
        if f.ndim > 2:
            mask = mask.reshape(mask.shape + (1,) * (f.ndim - 2))
        return np.fft.irfft(spec * mask, n=self.n_phi, axis=1)

    def integrate(self, f):
        """Solid-angle quadrature of ``f`` with pairwise (numpy) summation."""
        return float(np.sum(self.weights * f))

    def harmonic(self, l, m):
        th, ph = self.mesh
        return real_sph_harm(l, m, th, ph)


@lru_cache(maxsize=16)
def make_grid(n_theta, n_phi=None):
    return GridSpec(n_theta, 2 * n_theta if n_phi is None else n_phi)
