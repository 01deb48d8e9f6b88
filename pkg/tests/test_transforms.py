import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracext import kernels, transforms
from fracext.spectra import Circle, ModeFunction, Sphere2

C1 = Circle(1.0)
HALF_PI = math.pi / 2

# polylog sums from mpmath (tests/oracles/derive.py), x = 0, z = pi/2 on the unit circle
NEUMANN_03 = [-0.39195816856835679, 0.51856558606261623, 0.90790588800296586, 3.2117871120250603,
              16.647911167020445, 113.34197204248691, 955.4547187365881]
NEUMANN_05 = [-0.19553320956870849, 0.56418958354775629, 0.75225277806367505, 2.4072088898037602,
              11.692157464761121, 75.807975196359685, 614.46698956814712]
DIRICHLET_03 = [0.74041665713537642, -0.16047993706812025, 0.057296798416964554, -0.021629424765695097,
                0.0083259788032701428]
DIRICHLET_05 = [0.56418958354775629, -0.18806319451591876, 0.075225277806367505, -0.030448326731148752,
                0.012338537629615834]


@pytest.mark.parametrize("s,ref", [(0.3, NEUMANN_03), (0.5, NEUMANN_05)])
def test_neumann_taylor_frozen(s, ref):
    tab = transforms.neumann_taylor_coeffs(C1, s, [0.0], [HALF_PI], 6)
    assert np.allclose(tab.values, ref, rtol=1e-9)
    assert tab.singular == pytest.approx(math.gamma(1 - s) / (s * 2 * math.pi))


@pytest.mark.parametrize("s,ref", [(0.3, DIRICHLET_03), (0.5, DIRICHLET_05)])
def test_dirichlet_taylor_frozen(s, ref):
    tab = transforms.dirichlet_taylor_coeffs(C1, s, [0.0], [HALF_PI], 4)
    assert np.allclose(tab.values, ref, rtol=1e-9)


@pytest.mark.parametrize("kind", ["neumann", "dirichlet"])
def test_series_matches_direct_evaluation(kind):
    s, d = 0.4, 1.3
    y = 0.1 * d
    if kind == "neumann":
        tab = transforms.neumann_taylor_coeffs(C1, s, [0.0], [d], 25)
        direct = kernels.neumann_poisson_from_heat(C1, s, y, [0.0], [d])
    else:
        tab = transforms.dirichlet_taylor_coeffs(C1, s, [0.0], [d], 12)
        direct = kernels.dirichlet_poisson_from_heat(C1, s, y, [0.0], [d])
    assert float(tab.series(y)) == pytest.approx(direct, rel=1e-9)


def test_sphere_series_matches_eigen_kernel():
    S = Sphere2(1.0)
    x, z = np.array([[0.3, 0.2]]), np.array([[1.4, 0.9]])
    s = 0.6
    tab = transforms.neumann_taylor_coeffs(S, s, x, z, 20)
    d = float(S.distance(x[0], z[0]))
    y = 0.1 * d
    eig = kernels.neumann_poisson_eigen(S, s, y, x, z)[0] * kernels.neumann_heat_ratio(s)
    assert float(tab.series(y)) == pytest.approx(eig, rel=1e-8)


def test_table_rows_and_csv(tmp_path):
    tab = transforms.neumann_taylor_coeffs(C1, 0.5, [0.0], [HALF_PI], 6)
    for j, scaled, e in tab.rows():
        assert scaled * 10.0**e == pytest.approx(tab.values[j])
    path = tmp_path / "c.csv"
    transforms.write_coefficient_tables(path, [tab])
    lines = path.read_text().splitlines()
    assert lines[0] == "kind,s,x,z,index,value_scaled,scale_exponent"
    assert len(lines) == 8 and lines[1].startswith("neumann,0.5,0.0,")


def test_taylor_validation():
    with pytest.raises(ValueError):
        transforms.neumann_taylor_coeffs(C1, 0.5, [1.0], [1.0], 3)
    with pytest.raises(ValueError):
        transforms.taylor_coefficients_from_heat(lambda t: t, 0.5, 100, "neumann")
    moments = transforms.CoefficientTable("moments", 0.5, (0.0,), (1.0,), np.ones(3))
    with pytest.raises(ValueError):
        moments.series(0.1)
    with pytest.raises(ValueError):
        transforms.heat_from_taylor(moments, [1.0])


@given(st.floats(0.5, 3.0), st.floats(0.0, 1.5), st.integers(8, 20))
def test_heat_from_moments_gamma_density(rate, alpha, n):
    # phi(r) = r^alpha e^(-rate r) has moments Gamma(alpha + l + 1) / rate^(alpha + l + 1);
    # the Laguerre expansion converges geometrically, roughly halving per moment
    m = np.array([math.gamma(alpha + l + 1) / rate ** (alpha + l + 1) for l in range(n)])
    r = np.linspace(0.1, 4.0, 15)
    rec = transforms.heat_from_moments(m, r, alpha=alpha, noise=1e-13)
    truth = r**alpha * np.exp(-rate * r)
    assert np.max(np.abs(rec.values - truth)) < 2.0**-n * np.max(truth)
    assert rec.residual < 1e-6


def test_heat_from_moments_zero_input():
    rec = transforms.heat_from_moments(np.zeros(4), [1.0, 2.0])
    assert np.all(rec.values == 0.0)
    with pytest.raises(ValueError):
        transforms.heat_from_moments([1.0], [1.0])


@pytest.mark.parametrize("route", ["direct", "derivative"])
def test_heat_from_taylor_routes(route):
    tab = transforms.neumann_taylor_coeffs(C1, 0.5, [0.0], [HALF_PI], 20)
    t = np.linspace(0.5, 2.0, 31)
    truth = np.array([kernels.heat(C1, ti, [0.0], [HALF_PI])[0] for ti in t])
    rec = transforms.heat_from_taylor(tab, t, route=route)
    err = np.linalg.norm(rec.values - truth) / np.linalg.norm(truth)
    assert err < 0.05
    if route == "derivative":
        assert rec.limit == pytest.approx(1 / (2 * math.pi), rel=1e-2)
        a0 = transforms.zeroth_from_derivative_route(rec, 0.5)
        assert a0 == pytest.approx(tab.values[0], rel=0.05)


def test_kannai_multiplier_frozen():
    # mpmath quadosc values
    assert transforms.kannai_multiplier(0.3, 4.0, 0.5) == pytest.approx(0.67251569250634308, rel=1e-10)
    assert transforms.kannai_multiplier(0.5, 1.0, 1.0) == pytest.approx(0.57786367489546086, rel=1e-10)


@given(st.floats(0.1, 5.0))
def test_kannai_zero_mode_arctan(y):
    # s = 1/2, lambda = 0: int_0^inf sqrt(tau) (tau + y^2)^(-2) d tau = (2/y) [arctan(u)/2 - u/(2(1+u^2))]_0^inf
    closed = 2.0 / y * (math.atan(math.inf) / 2.0)
    assert transforms.kannai_multiplier(0.5, 0.0, y) * y ** (-1.0) == pytest.approx(closed, rel=1e-10)
    assert transforms.kannai_constant(0.5) == pytest.approx(math.pi / 2, rel=1e-14)


@given(st.floats(0.1, 0.9), st.sampled_from([0.5, 1.0, 2.0]))
def test_kannai_forward_is_a_multiple_of_the_dirichlet_kernel(s, y):
    f = ModeFunction(C1, np.ones(9))
    fwd = transforms.kannai_forward(C1, s, y, f).coeffs
    prof = kernels.dirichlet_profile(s, np.sqrt(C1.eigenvalues(9)) * y)
    ratio = fwd / prof
    assert np.ptp(ratio) / abs(ratio.mean()) < 1e-6
    assert ratio.mean() == pytest.approx(transforms.kannai_constant(s), rel=1e-8)


@given(st.floats(0.1, 0.9), st.sampled_from([0.0, 1.0, 4.0, 9.0]))
def test_two_moment_routes_agree(s, lam):
    a = transforms.kannai_moments(s, lam, 10)
    b = transforms.dirichlet_derivative_moments(s, lam, 10)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-14 * np.abs(a).max())


@pytest.mark.parametrize("lam", [0.0, 1.0, 4.0])
def test_kannai_inverse_single_mode(lam):
    s = 0.4
    tau = np.linspace(0.2, 4.0, 60)
    W = transforms.kannai_inverse(transforms.dirichlet_derivative_moments(s, lam, 20), s, tau).values
    exact = np.sqrt(tau) if lam == 0 else np.sin(np.sqrt(tau * lam)) / math.sqrt(lam)
    assert np.linalg.norm(W - exact) / np.linalg.norm(exact) < 0.05


def test_fractional_power_constant():
    # Gamma(-2 nu) cos(pi nu) written without the pole at nu = 1/2
    for nu in (0.3, 0.7, 1.3, 2.2):
        assert transforms.fractional_power_constant(nu) == pytest.approx(math.gamma(-2 * nu) * math.cos(math.pi * nu))
    assert math.isfinite(transforms.fractional_power_constant(0.5))
    with pytest.raises(ValueError):
        transforms.fractional_power_constant(1.0)


def test_wave_from_fractional_moments_on_exact_moments():
    # a function supported in [d^2, inf) in tau with known moments: W(tau) = (tau - d^2)^2 exp(-(tau - d^2))
    s, d = 0.5, 0.8
    from scipy import integrate

    W = lambda tau: (tau - d * d) ** 2 * np.exp(-(tau - d * d))  # noqa: E731
    L = 14
    D = []
    for l in range(L + 1):
        nu = s + l
        mom = integrate.quad(lambda tau: W(tau) * tau ** (-1.5 - nu), d * d, np.inf, epsabs=0, epsrel=1e-13)[0]
        D.append(0.5 * mom * (1 + 2 * nu) / transforms.fractional_power_constant(nu))
    tau = np.linspace(1.0, 3.0, 21)
    rec = transforms.wave_from_fractional_moments(np.array(D), s, tau, d)
    assert rec.residual < 1e-6
    assert np.max(np.abs(rec.values - W(tau))) < 0.05 * np.max(W(tau))
    assert np.all(transforms.wave_from_fractional_moments(np.array(D), s, [0.1, 0.5], d).values == 0.0)


def test_ill_conditioned_flag():
    rec = transforms.MomentReconstruction(np.zeros(1), np.zeros(1), 1e13, 0.0, 1.0)
    assert rec.ill_conditioned
