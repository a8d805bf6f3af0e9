import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from apmcf.ambient import AmbientMetric
from apmcf.errors import DegenerateSurfaceError, NonpositiveMeanCurvatureError
from apmcf.grid import make_grid
from apmcf.surface import (SURFACE_COLUMNS, RadialGraph, covariant_grad_A_norm,
                           enclosed_volume, global_terms, laplace_beltrami, snapshot,
                           write_surface_csv)

from conftest import all_ambients


def _perturbed(grid, radius, rng, amp, center=(0.0, 0.0, 0.0)):
    rho = np.full(grid.shape, radius)
    for l in range(1, 5):
        for m in range(-l, l + 1):
            rho = rho + amp * radius * rng.uniform(-1, 1) * grid.harmonic(l, m) / (l * l)
    return RadialGraph(rho, grid, np.asarray(center))


def test_euclidean_sphere_exact():
    g = make_grid(24)
    for c in [(0, 0, 0), (0.3, -0.2, 0.1)]:
        s = RadialGraph.sphere(2.0, g, c)
        snap = snapshot(s, AmbientMetric.euclidean())
        assert np.allclose(snap.H, 1.0, atol=1e-12)
        assert np.abs(snap.Aring_sq).max() < 1e-24
        assert np.allclose(snap.E2, 0.25, atol=1e-12)
        assert snap.first.area == pytest.approx(16 * np.pi, rel=1e-13)
        assert enclosed_volume(s, AmbientMetric.euclidean()) == pytest.approx(32 * np.pi / 3, rel=1e-13)


def test_geodesic_spheres_in_space_forms():
    g = make_grid(24)
    # stereographic chart radius R is the geodesic radius s = 2 arctan R (S^3),
    # s = 2 artanh R (H^3)
    R = 0.6
    s_sph, s_hyp = 2 * np.arctan(R), 2 * np.arctanh(R)
    snap = snapshot(RadialGraph.sphere(R, g), AmbientMetric.sphere())
    assert np.allclose(snap.H, 2 / np.tan(s_sph), atol=1e-12)
    assert snap.first.area == pytest.approx(4 * np.pi * np.sin(s_sph) ** 2, rel=1e-12)
    vol = enclosed_volume(RadialGraph.sphere(R, g), AmbientMetric.sphere())
    assert vol == pytest.approx(np.pi * (2 * s_sph - np.sin(2 * s_sph)), rel=1e-12)
    snap = snapshot(RadialGraph.sphere(R, g), AmbientMetric.hyperbolic())
    assert np.allclose(snap.H, 2 / np.tanh(s_hyp), atol=1e-12)
    vol = enclosed_volume(RadialGraph.sphere(R, g), AmbientMetric.hyperbolic())
    assert vol == pytest.approx(np.pi * (np.sinh(2 * s_hyp) - 2 * s_hyp), rel=1e-12)


def test_schwarzschild_coordinate_sphere():
    g = make_grid(24)
    m, r, r_in = 1.0, 10.0, 1.0
    amb = AmbientMetric.schwarzschild(m)
    psi = 1 + m / (2 * r)
    dpsi = -m / (2 * r * r)
    snap = snapshot(RadialGraph.sphere(r, g), amb)
    assert np.allclose(snap.H, psi**-2 * (2 / r + 4 * dpsi / psi), atol=1e-13)
    assert snap.first.area == pytest.approx(4 * np.pi * r * r * psi**4, rel=1e-13)
    exact = integrate.quad(lambda x: 4 * np.pi * x * x * (1 + m / (2 * x)) ** 6, r_in, r,
                           epsabs=0, epsrel=1e-13)[0]
    assert enclosed_volume(RadialGraph.sphere(r, g), amb, r_in) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("name,amb,r", all_ambients())
def test_fast_and_generic_paths_agree(name, amb, r, rng, monkeypatch):
    g = make_grid(16)
    s = _perturbed(g, r, rng, 0.05, center=(0.01 * r, 0, 0))
    fast = snapshot(s, amb)
    monkeypatch.setattr(AmbientMetric, "is_conformal", property(lambda self: False))
    slow = snapshot(s, amb)
    scale = np.abs(fast.H).max()
    assert np.allclose(fast.H, slow.H, atol=1e-12 * scale)
    assert np.allclose(fast.nu, slow.nu, atol=1e-12)
    assert np.allclose(fast.w, slow.w, rtol=1e-12)
    assert np.allclose(fast.Aring_sq, slow.Aring_sq, atol=1e-12 * scale**2)


@pytest.mark.parametrize("name,amb,r", all_ambients())
def test_normal_is_unit_and_orthogonal(name, amb, r, rng):
    g = make_grid(16)
    snap = snapshot(_perturbed(g, r, rng, 0.1), amb)
    gb = amb.metric_at(snap.F)
    nn = np.einsum("...a,...ab,...b->...", snap.nu, gb, snap.nu)
    assert np.allclose(nn, 1.0, atol=1e-12)
    for X in (snap.first.Ft, snap.first.Fp):
        dot = np.einsum("...a,...ab,...b->...", snap.nu, gb, X)
        assert np.abs(dot).max() < 1e-11 * r


@pytest.mark.parametrize("name,amb,r", all_ambients())
def test_integral_identities(name, amb, r, rng):
    g = make_grid(16)
    for _ in range(4):
        s = _perturbed(g, r, rng, 0.1)
        snap = snapshot(s, amb)
        t = global_terms(s, amb, snap.first, snap.second, with_volume=False)
        scale = t.h * t.h0 * t.area
        assert abs(t.int_dev_h - t.h * (t.h0 - t.h) * t.area) <= 1e-12 * scale
        assert abs(t.int_dev_h0 - t.h0 * (t.h0 - t.h) * t.area) <= 1e-12 * scale


def test_laplace_beltrami_spectrum():
    errs = []
    for n in (16, 32):
        g = make_grid(n)
        s = RadialGraph.sphere(1.0, g)
        first = snapshot(s, AmbientMetric.euclidean()).first
        e = []
        for l, m in [(1, 0), (2, 1), (3, -2)]:
            y = g.harmonic(l, m)
            e.append(np.abs(laplace_beltrami(s, AmbientMetric.euclidean(), first, y) + l * (l + 1) * y).max())
        errs.append(max(e))
    assert errs[0] < 2e-2 and errs[1] < errs[0] / 16


def test_laplace_beltrami_scales_with_radius():
    g = make_grid(24)
    amb = AmbientMetric.euclidean()
    y = g.harmonic(2, 0)
    s1, s2 = RadialGraph.sphere(1.0, g), RadialGraph.sphere(3.0, g)
    l1 = laplace_beltrami(s1, amb, snapshot(s1, amb).first, y)
    l2 = laplace_beltrami(s2, amb, snapshot(s2, amb).first, y)
    assert np.allclose(l2, l1 / 9.0, atol=1e-12)


def test_grad_A_vanishes_on_spheres_and_scales():
    g = make_grid(24)
    amb = AmbientMetric.euclidean()
    s = RadialGraph.sphere(1.0, g)
    snap = snapshot(s, amb)
    assert covariant_grad_A_norm(s, amb, snap.first, snap.second).max() < 1e-10
    y = g.harmonic(2, 0)
    vals = []
    for R in (1.0, 2.0):
        s = RadialGraph(R * (1 + 0.01 * y), g)
        snap = snapshot(s, amb)
        vals.append(covariant_grad_A_norm(s, amb, snap.first, snap.second).max())
    # |grad A°| has units length^-2
    assert vals[1] == pytest.approx(vals[0] / 4, rel=1e-9)


def test_aring_sq_quadratic_in_amplitude():
    g = make_grid(24)
    amb = AmbientMetric.euclidean()
    y = g.harmonic(2, 0)
    vals = []
    for a in (0.02, 0.01):
        snap = snapshot(RadialGraph(1 + a * y, g), amb)
        vals.append(snap.integrate(snap.Aring_sq))
    assert vals[0] / vals[1] == pytest.approx(4.0, rel=0.02)


def test_nonpositive_total_mean_curvature():
    g = make_grid(16)
    s = RadialGraph.sphere(3.0, g)     # beyond the equator of S^3: H < 0
    snap = snapshot(s, AmbientMetric.sphere())
    with pytest.raises(NonpositiveMeanCurvatureError):
        global_terms(s, AmbientMetric.sphere(), snap.first, snap.second)


def test_degenerate_surface_detected():
    g = make_grid(16)
    with pytest.raises(ValueError):
        RadialGraph(np.zeros(g.shape), g)
    th, ph = g.mesh
    # a wildly oscillating graph still has positive det g, so check the guard directly
    s = RadialGraph(np.ones(g.shape), g)
    snap = snapshot(s, AmbientMetric.euclidean())
    assert np.all(snap.first.sqrt_det_g > 0)
    assert issubclass(DegenerateSurfaceError, Exception)


@given(st.integers(0, 31), st.floats(-0.1, 0.1), st.floats(-0.1, 0.1))
def test_longitude_rotation_equivariance(shift, a, b):
    g = make_grid(16)
    y = g.harmonic(2, 1) * a + g.harmonic(3, -2) * b
    s = RadialGraph(1.0 + y, g)
    r = RadialGraph(np.roll(1.0 + y, shift, axis=1), g)
    amb = AmbientMetric.euclidean()
    sa, sb = snapshot(s, amb), snapshot(r, amb)
    assert sb.first.area == pytest.approx(sa.first.area, rel=1e-13)
    assert np.allclose(np.roll(sa.H, shift, axis=1), sb.H, atol=1e-11)


@given(st.floats(0.5, 3.0))
def test_area_scales_quadratically(R):
    g = make_grid(16)
    y = 0.05 * g.harmonic(2, 2)
    amb = AmbientMetric.euclidean()
    a1 = snapshot(RadialGraph(1 + y, g), amb).first.area
    a2 = snapshot(RadialGraph(R * (1 + y), g), amb).first.area
    assert a2 == pytest.approx(R * R * a1, rel=1e-12)


def test_surface_csv(tmp_path):
    g = make_grid(16)
    snap = snapshot(RadialGraph.sphere(1.0, g), AmbientMetric.euclidean())
    p = tmp_path / "s.csv"
    write_surface_csv(p, snap)
    lines = p.read_text().split("\n")
    assert lines[0] == ",".join(SURFACE_COLUMNS)
    assert len(lines) == 16 * 32 + 2 and lines[-1] == ""
    write_surface_csv(p, None)
    assert p.read_text() == ",".join(SURFACE_COLUMNS) + "\n"
