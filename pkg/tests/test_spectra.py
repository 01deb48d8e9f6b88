import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracext.spectra import Arc, Cap, Circle, FlatTorus2, ModeFunction, Rectangle, Sphere2, project

MANIFOLDS = [Circle(1.0), Circle(1.7), FlatTorus2(np.diag([1.0, 2.0])), FlatTorus2(np.array([[1.0, 0.2], [0.2, 1.5]])),
             Sphere2(1.0), Sphere2(0.8)]


@pytest.mark.parametrize("m", MANIFOLDS, ids=repr)
def test_basis_orthonormal(m):
    n = 25
    nodes, w = m.quadrature_grid(1, min_resolution=m.resolution(n))
    B = m.basis(nodes, n)
    assert np.allclose(B.T @ (w[:, None] * B), np.eye(n), atol=1e-11)


@pytest.mark.parametrize("m", MANIFOLDS, ids=repr)
def test_eigenvalues_sorted_and_counted(m):
    lam = m.eigenvalues(40)
    assert lam[0] == 0.0
    assert np.all(np.diff(lam) >= -1e-12)
    for cut in (lam[5], lam[17]):
        assert m.mode_count(cut + 1e-9) == int(np.sum(m.eigenvalues(200) <= cut + 1e-9))


@pytest.mark.parametrize("m", MANIFOLDS, ids=repr)
def test_constant_mode(m):
    x = m.sample(np.random.default_rng(0), 5)
    assert np.allclose(m.basis(x, 1)[:, 0], 1.0 / math.sqrt(m.volume))


@pytest.mark.parametrize("m", MANIFOLDS[2:], ids=repr)
def test_laplacian_eigen_relation(m):
    # -Delta phi_k = lambda_k phi_k, with Delta from finite differences in the coordinates
    n = 16
    rng = np.random.default_rng(3)
    x = m.sample(rng, 4)
    if isinstance(m, Sphere2):
        x[:, 0] = np.clip(x[:, 0], 0.4, math.pi - 0.4)
    h = 1e-3
    lam = m.eigenvalues(n)
    f0 = m.basis(x, n)
    lap = np.zeros_like(f0)
    if isinstance(m, FlatTorus2):
        gi = m.inverse_metric(x)[0]
        for i in range(2):
            for j in range(2):
                ei, ej = np.eye(2)[i] * h, np.eye(2)[j] * h
                d2 = (m.basis(x + ei + ej, n) - m.basis(x + ei - ej, n) - m.basis(x - ei + ej, n)
                      + m.basis(x - ei - ej, n)) / (4 * h * h)
                lap += gi[i, j] * d2
    else:
        R = m.radius
        th = x[:, :1]
        et, ep = np.array([h, 0.0]), np.array([0.0, h])
        d2t = (m.basis(x + et, n) - 2 * f0 + m.basis(x - et, n)) / h**2
        d1t = (m.basis(x + et, n) - m.basis(x - et, n)) / (2 * h)
        d2p = (m.basis(x + ep, n) - 2 * f0 + m.basis(x - ep, n)) / h**2
        lap = (d2t + np.cos(th) / np.sin(th) * d1t + d2p / np.sin(th) ** 2) / R**2
    assert np.allclose(-lap, lam * f0, atol=1e-4 * max(1.0, lam.max()))


def test_sphere_addition_theorem():
    m = Sphere2(1.0)
    rng = np.random.default_rng(5)
    x, z = m.sample(rng, 3), m.sample(rng, 3)
    c = m.cos_angle(x, z)
    Bx, Bz = m.basis(x, 36), m.basis(z, 36)
    for l in range(6):
        sl = slice(l * l, (l + 1) ** 2)
        lhs = np.sum(Bx[:, sl] * Bz[:, sl], axis=1)
        rhs = (2 * l + 1) / (4 * math.pi) * np.polynomial.legendre.legval(c, np.eye(l + 1)[l])
        assert np.allclose(lhs, rhs, atol=1e-12)


def test_sphere_harmonics_without_phase_factor():
    # Y_1^1 is +sqrt(3/4pi) sin(theta) cos(phi): positive on the x axis
    m = Sphere2(1.0)
    k = 3  # (l, m) = (1, 1)
    assert m.degree_order(k) == (1, 1)
    assert m.basis(np.array([[math.pi / 2, 0.0]]), 4)[0, k] == pytest.approx(math.sqrt(3 / (4 * math.pi)))


def test_circle_mode_order():
    m = Circle(1.0)
    x = np.array([0.3])
    b = m.basis(x, 5)[0]
    ref = np.array([1 / math.sqrt(2 * math.pi), math.cos(0.3) / math.sqrt(math.pi), math.sin(0.3) / math.sqrt(math.pi),
                    math.cos(0.6) / math.sqrt(math.pi), math.sin(0.6) / math.sqrt(math.pi)])
    assert np.allclose(b, ref)


@pytest.mark.parametrize("m", MANIFOLDS, ids=repr)
def test_distance_is_a_metric(m):
    rng = np.random.default_rng(11)
    x, y, z = m.sample(rng, 20), m.sample(rng, 20), m.sample(rng, 20)
    if isinstance(m, Circle):
        x, y, z = x[:, 0], y[:, 0], z[:, 0]
    dxz, dzx = m.distance(x, z), m.distance(z, x)
    assert np.allclose(dxz, dzx)
    assert np.all(m.distance(x, y) + m.distance(y, z) >= dxz - 1e-12)
    assert np.allclose(m.distance(x, x), 0.0, atol=1e-7)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=12), st.lists(st.floats(-5, 5), min_size=1, max_size=12),
       st.floats(-3, 3))
def test_mode_function_algebra(a, b, c):
    m = Circle(1.0)
    f, g = ModeFunction(m, a), ModeFunction(m, b)
    x = np.linspace(0, 2 * math.pi, 7)
    assert np.allclose((f + c * g)(x), f(x) + c * g(x), atol=1e-9)
    assert np.allclose((f - f).coeffs, 0.0)
    assert f.without_mean().mean_zero
    assert (f * 2.0).l2_norm() == pytest.approx(2.0 * f.l2_norm())


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=10))
def test_spectral_multiply_composes(coeffs):
    m = Sphere2(1.0)
    f = ModeFunction(m, coeffs)
    g = f.spectral_multiply(lambda lam: lam + 1.0).spectral_multiply(lambda lam: 1.0 / (lam + 1.0))
    assert np.allclose(g.coeffs, f.coeffs)


@pytest.mark.parametrize("m", MANIFOLDS[::2], ids=repr)
def test_project_recovers_band_limited_function(m):
    c = np.random.default_rng(2).normal(size=9)
    f = ModeFunction(m, c)
    assert np.allclose(project(m, f, 8).coeffs, c, atol=1e-11)


def test_mean_and_integral_agree():
    m = FlatTorus2(np.diag([1.0, 2.0]))
    f = ModeFunction(m, [0.7, 0.2, -0.3])
    assert m.integrate(f) == pytest.approx(f.mean() * m.volume, rel=1e-10)


def test_arc_geometry():
    m = Circle(1.0)
    a, b = Arc(m, 0.0, 0.5), Arc(m, 1.0, 0.3)
    assert a.disjoint(b) and b.disjoint(a)
    assert not a.disjoint(Arc(m, 0.6, 0.2))
    assert a.contains(np.array([0.4, -0.4, 2 * math.pi - 0.1])).all()
    assert not a.contains(np.array([0.6])).any()
    nodes, w = a.quadrature_grid(32)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(a.contains(nodes))


def test_rectangle_and_cap_rules():
    T = FlatTorus2(np.diag([1.0, 2.0]))
    r = Rectangle(T, 0.4, 0.6, 0.3, 0.7)
    nodes, w = r.quadrature_grid(32)
    assert np.all(r.contains(nodes))
    assert w.sum() == pytest.approx(0.2 * 0.4 * T.volume, rel=1e-12)
    S = Sphere2(1.0)
    cap = Cap(S, (0.5, 1.0), 0.3)
    nodes, w = cap.quadrature_grid(32)
    assert w.sum() == pytest.approx(2 * math.pi * (1 - math.cos(0.3)), rel=1e-12)
    assert np.all(cap.contains(nodes))


@pytest.mark.parametrize("subset", [Arc(Circle(1.0), 0.5, 0.6),
                                    Rectangle(FlatTorus2(np.diag([1.0, 2.0])), 0.3, 0.7, 0.3, 0.7),
                                    Cap(Sphere2(1.0), (1.0, 2.0), 0.5)], ids=lambda s: type(s).__name__)
def test_bumps_live_inside(subset):
    m = subset.manifold
    nodes, _ = m.quadrature_grid(1, min_resolution=24)
    for bump in (subset.bump(), subset.gaussian_bump()):
        v = bump(nodes)
        outside = ~subset.contains(nodes)
        assert np.max(np.abs(v[outside])) < 1e-8 * np.max(np.abs(v))
