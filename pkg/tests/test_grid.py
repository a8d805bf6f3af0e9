import numpy as np
import pytest
from hypothesis import given, strategies as st

from apmcf.grid import GridSpec, fd_weights, make_grid, real_sph_harm


def test_weights_integrate_constants_and_harmonics():
    g = make_grid(24)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(4 * np.pi, rel=1e-14)
    # orthonormality of the real harmonics
    for (l1, m1), (l2, m2) in [((2, 0), (2, 0)), ((3, -2), (3, -2)), ((2, 1), (3, 1)), ((1, 1), (1, -1))]:
        val = g.integrate(g.harmonic(l1, m1) * g.harmonic(l2, m2))
        assert val == pytest.approx(float((l1, m1) == (l2, m2)), abs=1e-12)


def test_no_node_on_pole_and_even_phi():
    g = make_grid(16)
    assert g.theta.min() > 0 and g.theta.max() < np.pi
    with pytest.raises(ValueError):
        GridSpec(16, 33)
    with pytest.raises(ValueError):
        GridSpec(8, 16)


def test_fd_weights_exact_on_polynomials():
    x = np.array([-0.3, -0.1, 0.05, 0.2, 0.45])
    c = fd_weights(0.1, x, 2)
    for p in range(5):
        f = x**p
        d1 = p * 0.1 ** (p - 1) if p >= 1 else 0.0
        d2 = p * (p - 1) * 0.1 ** (p - 2) if p >= 2 else 0.0
        assert c[1] @ f == pytest.approx(d1, abs=1e-11)
        assert c[2] @ f == pytest.approx(d2, abs=1e-9)


def test_real_harmonic_rejects_bad_order():
    with pytest.raises(ValueError):
        real_sph_harm(1, 2, 0.1, 0.2)


@pytest.mark.parametrize("l,m", [(1, 0), (2, 1), (3, -2), (4, 3)])
def test_theta_phi_derivatives_converge(l, m):
    # derivatives of Y_lm: errors shrink by well over 2^4 when the grid doubles
    errs = []
    for n in (16, 32):
        g = make_grid(n)
        th, ph = g.mesh
        h = 1e-6
        y = g.harmonic(l, m)
        dt = (real_sph_harm(l, m, th + h, ph) - real_sph_harm(l, m, th - h, ph)) / (2 * h)
        dp = (real_sph_harm(l, m, th, ph + h) - real_sph_harm(l, m, th, ph - h)) / (2 * h)
        errs.append((np.abs(g.d_theta(y) - dt).max(), np.abs(g.d_phi(y) - dp).max()))
    assert errs[1][0] < errs[0][0] / 16 or errs[1][0] < 1e-7
    assert errs[1][1] < errs[0][1] / 12 or errs[1][1] < 1e-7


def test_polar_filter_is_projection_and_keeps_low_modes():
    g = make_grid(24)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(g.shape)
    pf = g.polar_filter(f)
    assert np.allclose(g.polar_filter(pf), pf, atol=1e-13)
    y = g.harmonic(2, 1)
    assert np.allclose(g.polar_filter(y), y, atol=1e-13)


@given(st.integers(16, 40))
def test_phi_count_and_cutoff(n):
    g = make_grid(n)
    assert g.shape == (n, 2 * n)
    assert np.all(g.filter_cutoff >= 1) and np.all(g.filter_cutoff <= g.n_phi // 2)
