"""Reference values for the frozen tests, computed with mpmath only.

Run ``python tests/oracles/derive.py`` to regenerate; the printed literals are
pasted into the test modules. Nothing here imports fracext.
"""

import mpmath as mp

mp.mp.dps = 40


def psi(s, r):
    """2^(1-s)/Gamma(s) r^s K_s(r), with psi(0) = 1."""
    if r == 0:
        return mp.mpf(1)
    return 2 ** (1 - s) / mp.gamma(s) * r**s * mp.besselk(s, r)


def circle_heat(t, d):
    return mp.jtheta(3, d / 2, mp.exp(-t)) / (2 * mp.pi)


def sphere_heat(t, d):
    c = mp.cos(d)
    return mp.nsum(lambda l: (2 * l + 1) / (4 * mp.pi) * mp.exp(-l * (l + 1) * t) * mp.legendre(l, c), [0, mp.inf])


def torus_heat(A, t, dx):
    """Flat torus R^2/Z^2 with metric A: (1/V) sum_k exp(-4 pi^2 k.A^-1 k t) cos(2 pi k.dx)."""
    A = mp.matrix(A)
    Ai = A**-1
    V = mp.sqrt(mp.det(A))
    total = mp.mpf(0)
    n = 12
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            q = Ai[0, 0] * i * i + 2 * Ai[0, 1] * i * j + Ai[1, 1] * j * j
            total += mp.exp(-4 * mp.pi**2 * q * t) * mp.cos(2 * mp.pi * (i * dx[0] + j * dx[1]))
    return total / V


def circle_neumann_poisson(s, y, d):
    return mp.nsum(lambda k: mp.cos(k * d) / mp.pi * k ** (-2 * s) * psi(s, k * y), [1, mp.inf])


def circle_dirichlet_poisson(s, y, d):
    return 1 / (2 * mp.pi) + mp.nsum(lambda k: mp.cos(k * d) / mp.pi * psi(s, k * y), [1, mp.inf])


def cosine_series(p, d):
    """sum_{k>=1} cos(k d) k^(-p), continued analytically in p."""
    return mp.re(mp.polylog(p, mp.exp(1j * d)))


def neumann_taylor(s, d, J):
    out = [mp.gamma(s) / mp.pi * cosine_series(2 * s, d)]
    for j in range(1, J + 1):
        out.append(mp.gamma(s - j) / mp.pi * cosine_series(2 * (s - j), d))
    return out


def dirichlet_taylor(s, d, L):
    out = []
    for l in range(L + 1):
        D = cosine_series(-2 * (s + l), d) / mp.pi
        out.append((-1) ** l * mp.gamma(-s - l) / (4**l * mp.factorial(l)) * D)
    return out


def kannai_multiplier(s, lam, y):
    w = mp.sqrt(lam)
    f = lambda sig: 2 * sig * (sig**2 + y**2) ** (-mp.mpf(3) / 2 - s) * mp.sin(sig * w) / w
    return y ** (2 * s) * mp.quadosc(f, [0, mp.inf], omega=w)


def circle_extension(s, kind, theta, y):
    """(cos theta + 0.5 sin 2 theta) / sqrt(pi) extended to height y on the unit circle."""
    a1, a2 = mp.mpf(1), mp.mpf("0.5")
    if kind == "neumann":
        a2 = a2 * 4 ** (-s)
    return (a1 * psi(s, y) * mp.cos(theta) + a2 * psi(s, 2 * y) * mp.sin(2 * theta)) / mp.sqrt(mp.pi)


def circle_energy(s, kind, component):
    """Weighted energy of (cos theta + sin 2 theta) / sqrt(pi), by quadrature in y of each mode."""
    total = mp.mpf(0)
    for lam in (1, 4):
        a = lam ** (-s) if kind == "neumann" else mp.mpf(1)
        w = mp.sqrt(lam)
        if component == "tangential":
            g = lambda y: y ** (1 - 2 * s) * lam * psi(s, w * y) ** 2
        else:
            g = lambda y: y ** (1 - 2 * s) * mp.diff(lambda u: psi(s, w * u), y) ** 2
        total += a**2 * mp.quad(g, [0, 1, 10, mp.inf])
    return total


def integrated_mode(s, lam):
    return mp.quad(lambda t: t ** (1 - 2 * s) * psi(s, mp.sqrt(lam) * t), [0, 1, mp.inf])


def show(name, value):
    print(f"{name} = {mp.nstr(value, 17)}")


if __name__ == "__main__":
    for nu, z in [(0.3, 0.1), (0.5, 1.0), (0.7, 5.0), (1.3, 0.5), (2.5, 10.0), (0.0, 2.0), (4.5, 0.25)]:
        show(f"besselk({nu}, {z})", mp.besselk(nu, z))
    for t, d in [(0.1, 0.5), (0.5, 1.5), (2.0, 3.0), (0.01, 0.2)]:
        show(f"circle_heat({t}, {d})", circle_heat(t, d))
    for t, d in [(0.1, 0.5), (0.5, 1.5), (2.0, 3.0)]:
        show(f"sphere_heat({t}, {d})", sphere_heat(t, d))
    show("torus_heat(diag(1,2), 0.05, (0.3, 0.2))", torus_heat([[1, 0], [0, 2]], 0.05, (0.3, 0.2)))
    show("torus_heat([[1,.2],[.2,1.5]], 0.02, (0.1, -0.25))", torus_heat([[1, 0.2], [0.2, 1.5]], 0.02, (0.1, -0.25)))
    for s, y, d in [(0.3, 0.5, 1.0), (0.5, 0.1, 2.0), (0.7, 1.0, 0.5)]:
        show(f"circle_neumann_poisson({s}, {y}, {d})", circle_neumann_poisson(s, y, d))
        show(f"circle_dirichlet_poisson({s}, {y}, {d})", circle_dirichlet_poisson(s, y, d))
    for s in (0.3, 0.5):
        print(f"neumann_taylor({s}, pi/2) =", [mp.nstr(v, 17) for v in neumann_taylor(s, mp.pi / 2, 6)])
        print(f"dirichlet_taylor({s}, pi/2) =", [mp.nstr(v, 17) for v in dirichlet_taylor(s, mp.pi / 2, 4)])
    show("kannai_multiplier(0.3, 4, 0.5)", kannai_multiplier(mp.mpf("0.3"), 4, mp.mpf("0.5")))
    show("kannai_multiplier(0.5, 1, 1)", kannai_multiplier(mp.mpf("0.5"), 1, 1))
    for kind in ("dirichlet", "neumann"):
        show(f"circle_extension(0.3, {kind}, 0.7, 0.4)", circle_extension(mp.mpf("0.3"), kind, mp.mpf("0.7"), mp.mpf("0.4")))
        for comp in ("tangential", "normal"):
            show(f"circle_energy(0.5, {kind}, {comp})", circle_energy(mp.mpf("0.5"), kind, comp))
    show("integrated_mode(0.3, 4)", integrated_mode(mp.mpf("0.3"), 4))
