"""Transforms between the heat, wave and Poisson kernels.

* Taylor coefficients in y of both Poisson kernels at a fixed pair x != z,
  computed as Mellin-type moments of the heat kernel in t.
* ``heat_from_moments``: recover a function on (0, inf) from finitely many power
  moments. The Laplace transform's Taylor series is re-expanded in the
  conformal variable u = p / (beta + p), which amounts to a generalised
  Laguerre expansion r^alpha e^(-beta r) L_k^(alpha)(beta r) with coefficients
  from a triangular system.
* The Kannai-type transform between the wave kernel and the Dirichlet Poisson
  kernel, mode by mode through Basset's integral, and its inverse from the
  moments of h(t) = t^(s-1/2) W(1/t - 1) on [0, 1].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .kernels import heat_in_time
from .specfun import HalflineIntegrand, basset_integral, bessel_k, gamma, integrate_halfline
from .spectra import ModeFunction, SpectralManifold

__all__ = [
    "CoefficientTable",
    "taylor_coefficients_from_heat",
    "neumann_taylor_coeffs",
    "dirichlet_taylor_coeffs",
    "neumann_singular_coefficient",
    "MomentReconstruction",
    "heat_from_moments",
    "heat_from_taylor",
    "kannai_constant",
    "kannai_multiplier",
    "kannai_forward",
    "kannai_moments",
    "dirichlet_derivative_moments",
    "kannai_inverse",
    "zeroth_from_derivative_route",
    "fractional_power_constant",
    "wave_from_fractional_moments",
    "write_coefficient_tables",
    "ILL_CONDITIONED",
]

ILL_CONDITIONED = 1e12
MAX_TAYLOR_ORDER = 60


def _log10_scale(j: int) -> float:
    """log10(4^j j!)."""
    return j * math.log10(4.0) + math.lgamma(j + 1) / math.log(10.0)


@dataclass(frozen=True, eq=False)
class CoefficientTable:
    """Taylor or moment coefficients at one tangential pair (x, z).

    For ``kind == "neumann"`` the Poisson kernel is

        P_y = sum_j (-1)^j a_j (y^2/4)^j / j!  +  singular * (y^2/4)^s,

    for ``kind == "dirichlet"`` it is

        P^D_y = y^(2s) sum_l c_l y^(2l),

    and ``kind == "moments"`` holds plain power moments. ``values`` stores a_j,
    c_l or the moments as given; ``scaled`` divides a_j by 4^j j!.
    """

    kind: str
    s: float
    x: tuple
    z: tuple
    values: np.ndarray
    singular: float = 0.0
    errors: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet", "moments"):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def order(self) -> int:
        return self.values.size - 1

    def scaled(self) -> np.ndarray:
        j = np.arange(self.values.size)
        return self.values * 10.0 ** (-np.array([_log10_scale(int(i)) for i in j]))

    def series(self, y, terms: int | None = None) -> np.ndarray:
        """Evaluate the truncated series with ``terms`` coefficients (all by default)."""
        if self.kind == "moments":
            raise ValueError("a moment table has no series in y")
        y = np.asarray(y, dtype=float)
        n = self.values.size if terms is None else terms
        q = y * y / 4.0
        total = np.zeros_like(y)
        if self.kind == "neumann":
            for j in range(n - 1, -1, -1):  # Horner in q = y^2/4
                total = total * q + (-1.0) ** j * self.values[j] / math.factorial(j)
            return total + self.singular * q**self.s
        for l in range(n - 1, -1, -1):
            total = total * y * y + self.values[l]
        return y ** (2.0 * self.s) * total

    def rows(self):
        for j, v in enumerate(self.values):
            scale = _log10_scale(j) if self.kind == "neumann" else 0.0
            yield j, v * 10.0 ** (-scale), scale


def _pair_tuple(m: SpectralManifold, p) -> tuple:
    return tuple(float(v) for v in m.as_points(p)[0])


def taylor_coefficients_from_heat(k_of_t, s: float, J: int, kind: str, *, mean: float = 0.0,
                                  rel_tol: float = 1e-12):
    """Mellin moments of a heat-type function t -> K_t.

    Neumann: a_0 = int (K_t - mean) t^(s-1) dt and a_j = int K_t t^(s-1-j) dt for j >= 1.
    Dirichlet: c_l = (-1)^l / (4^l l!) int K_t t^(-1-s-l) dt.

    ``mean`` is the large-t limit of K_t (1/volume for a heat kernel). The
    integrals for j >= 1 converge only when K_t vanishes faster than any power as
    t -> 0, i.e. off the diagonal; divergent cases raise QuadratureError.

    Returns:
        (values, error estimates).
    """
    if not 0 <= J <= MAX_TAYLOR_ORDER:
        raise ValueError(f"Taylor order must lie in [0, {MAX_TAYLOR_ORDER}]")
    noise = getattr(k_of_t, "noise", None)

    def integrand(power, shift=0.0):
        f = lambda t: (k_of_t(t) - shift) * t**power  # noqa: E731
        if noise is None:
            return f
        return HalflineIntegrand(f, noise=lambda t: noise(t) * t**power)

    values, errors = [], []
    for j in range(J + 1):
        if kind == "neumann":
            f = integrand(s - 1.0, mean) if j == 0 else integrand(s - 1.0 - j)
            v, e = integrate_halfline(f, rel_tol, full_output=True)
        elif kind == "dirichlet":
            v, e = integrate_halfline(integrand(-1.0 - s - j), rel_tol, full_output=True)
            factor = (-1.0) ** j / (4.0**j * math.factorial(j))
            v, e = v * factor, e * abs(factor)
        else:
            raise ValueError(f"unknown kind {kind!r}")
        values.append(v)
        errors.append(e)
    return np.array(values), np.array(errors)


def neumann_singular_coefficient(s: float, volume: float) -> float:
    """Coefficient of (y^2/4)^s in the Neumann expansion off the diagonal: Gamma(1-s)/(s vol)."""
    return gamma(1.0 - s) / (s * volume)


def neumann_taylor_coeffs(m: SpectralManifold, s: float, x, z, J: int, *, rel_tol: float = 1e-12) -> CoefficientTable:
    """Taylor data of the heat-transform Neumann Poisson kernel at y = 0, for x != z."""
    if float(np.min(m.distance(m.as_points(x)[0].squeeze(), m.as_points(z)[0].squeeze()))) <= 0:
        raise ValueError("Taylor coefficients need x != z")
    k = heat_in_time(m, x, z, rel_tol=rel_tol * 1e-2)
    values, errors = taylor_coefficients_from_heat(k, s, J, "neumann", mean=1.0 / m.volume, rel_tol=rel_tol)
    return CoefficientTable("neumann", s, _pair_tuple(m, x), _pair_tuple(m, z), values,
                            singular=neumann_singular_coefficient(s, m.volume), errors=errors)


def dirichlet_taylor_coeffs(m: SpectralManifold, s: float, x, z, J: int, *, rel_tol: float = 1e-12) -> CoefficientTable:
    """Taylor data of the heat-transform Dirichlet Poisson kernel at y = 0, for x != z."""
    if float(np.min(m.distance(m.as_points(x)[0].squeeze(), m.as_points(z)[0].squeeze()))) <= 0:
        raise ValueError("Taylor coefficients need x != z")
    k = heat_in_time(m, x, z, rel_tol=rel_tol * 1e-2)
    values, errors = taylor_coefficients_from_heat(k, s, J, "dirichlet", rel_tol=rel_tol)
    return CoefficientTable("dirichlet", s, _pair_tuple(m, x), _pair_tuple(m, z), values, errors=errors)


@dataclass(frozen=True, eq=False)
class MomentReconstruction:
    """Result of a moment inversion.

    Attributes:
        values: reconstructed samples on the requested grid.
        coefficients: expansion coefficients after regularisation.
        condition: condition number of the row-normalised moment matrix.
        residual: max relative mismatch between the reconstruction's moments and the input.
        parameter: the Laguerre scale beta (half-line) or the number of kept terms (interval).
        ridge: regularisation strength chosen by the discrepancy principle.
    """

    values: np.ndarray
    coefficients: np.ndarray
    condition: float
    residual: float
    parameter: float
    ridge: float = 0.0
    reproduced_moments: np.ndarray = field(default_factory=lambda: np.zeros(0))
    limit: float = math.nan

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > ILL_CONDITIONED


def estimate_decay_rate(moments, noise=None) -> float:
    """Fit m_l / l! ~ A l^g c^(-l) and return c, the exponential decay rate of the density.

    Moments whose relative noise exceeds 5% are left out of the fit.
    """
    m = np.abs(np.asarray(moments, dtype=float))
    l = np.arange(m.size)
    keep = (l >= 1) & (m > 0) & np.isfinite(m)
    if noise is not None:
        keep &= np.broadcast_to(np.asarray(noise, dtype=float), m.shape) <= 0.05
    if np.count_nonzero(keep) < 3:
        return 1.0
    y = np.log(m[keep]) - np.array([math.lgamma(i + 1) for i in l[keep]])
    A = np.stack([np.ones(np.count_nonzero(keep)), np.log(l[keep]), l[keep]], axis=1)
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    c = math.exp(-coef[2])
    return c if np.isfinite(c) and c > 0 else 1.0


def _laguerre_system(n: int, alpha: float, beta: float) -> np.ndarray:
    """T[l, k]: coefficient of p^l in the Laplace transform of r^alpha e^(-beta r) L_k^(alpha)(beta r)."""
    T = np.zeros((n, n))
    for k in range(n):
        ck = math.exp(math.lgamma(k + alpha + 1.0) - math.lgamma(k + 1.0))
        for l in range(k, n):
            # binom(-a, n) = (-1)^n (a)_n / n! with a = k + alpha + 1 > 0
            a, n_ = k + alpha + 1.0, l - k
            binom = (-1.0) ** n_ * math.exp(math.lgamma(a + n_) - math.lgamma(a) - math.lgamma(n_ + 1.0))
            T[l, k] = ck * beta ** (-l - alpha - 1.0) * binom
    return T


def _tikhonov_discrepancy(A: np.ndarray, b: np.ndarray, sigma: np.ndarray):
    """Solve min ||(Ax - b)/sigma||^2 + mu ||x||^2 with the largest mu meeting chi^2 <= n."""
    As = A / sigma[:, None]
    bs = b / sigma
    U, S, Vt = np.linalg.svd(As)
    beta = U.T @ bs
    n = b.size

    def solve(mu):
        filt = S / (S * S + mu)
        return Vt.T @ (filt * beta)

    def chi2(mu):
        return float(np.sum((mu / (S * S + mu) * beta) ** 2))

    if chi2(0.0) > n or S[0] == 0:
        return solve(0.0), 0.0
    lo, hi = -40.0, math.log10(S[0] ** 2) + 10.0
    if chi2(10.0**hi) <= n:
        return solve(10.0**hi), 10.0**hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if chi2(10.0**mid) <= n:
            lo = mid
        else:
            hi = mid
    return solve(10.0**lo), 10.0**lo


def heat_from_moments(moments, grid, *, alpha: float = 0.0, beta: float | None = None,
                      noise=1e-10) -> MomentReconstruction:
    """Recover a function phi on (0, inf) from its moments int phi(r) r^l dr.

    The Laplace transform F(p) = sum_l (-p)^l m_l / l! is matched term by term
    with the expansion phi(r) = r^alpha e^(-beta r) sum_k x_k L_k^(alpha)(beta r).
    The system is lower triangular; it is solved with Tikhonov regularisation,
    the parameter picked by the discrepancy principle for relative moment
    noise ``noise`` (a scalar or one value per moment). ``alpha`` should match the behaviour of phi at r = 0, and
    beta (default 1.5 times the decay rate estimated from the moments) must stay
    below twice that rate for the expansion to converge.

    Args:
        moments: m_0, ..., m_{n-1}.
        grid: points r where phi is wanted.
    """
    m = np.asarray(moments, dtype=float)
    r = np.asarray(grid, dtype=float)
    n = m.size
    if n < 2:
        raise ValueError("need at least two moments")
    if not np.any(m):
        return MomentReconstruction(np.zeros_like(r), np.zeros(n), 1.0, 0.0, beta or 1.0, 0.0, np.zeros(n))
    if beta is None:
        beta = 1.5 * estimate_decay_rate(m, noise)
    l = np.arange(n)
    fact = np.array([math.factorial(int(i)) for i in l], dtype=float)
    rhs = (-1.0) ** l * m / fact
    T = _laguerre_system(n, alpha, beta)
    # rows are rescaled by beta^l so the system is O(1)
    row = beta ** (l + alpha + 1.0)
    A, b = T * row[:, None], rhs * row
    scale = np.max(np.abs(b))
    # a relative noise of 1 already means 'unknown'; larger values only overflow
    rel = np.minimum(np.broadcast_to(np.asarray(noise, dtype=float), b.shape), 1.0)
    sigma = rel * np.maximum(np.abs(b), 1e-3 * rel * scale) + 1e-300
    An = A / np.linalg.norm(A, axis=1)[:, None]
    condition = float(np.linalg.cond(An))
    x, mu = _tikhonov_discrepancy(A, b, sigma)
    reproduced = (T @ x) * fact * (-1.0) ** l
    residual = float(np.max(np.abs(reproduced - m) / np.maximum(np.abs(m), 1e-300)))
    basis = np.array([special.eval_genlaguerre(k, alpha, beta * r) for k in range(n)])
    values = (x @ basis) * r**alpha * np.exp(-beta * r)
    return MomentReconstruction(values, x, condition, residual, beta, mu, reproduced)


def _table_noise(table: CoefficientTable):
    """Relative noise per moment from a table's error column, floored at 1e-10."""
    if table.errors is None:
        return 1e-10
    err = np.asarray(table.errors, dtype=float)[1:]
    val = np.abs(table.values[1:])
    return np.maximum(err / np.maximum(val, 1e-300), 1e-10)


def _laguerre_tail(x, alpha: float, beta: float, p: float, R) -> np.ndarray:
    """int_R^inf r^(alpha + p) e^(-beta r) sum_k x_k L_k^(alpha)(beta r) dr, in closed form.

    Each Laguerre polynomial is expanded in powers of u = beta r and every
    power integrates to an upper incomplete gamma function.
    """
    R = np.atleast_1d(np.asarray(R, dtype=float))
    n = len(x)
    # power-basis coefficients of sum_k x_k L_k^(alpha)(u)
    poly = np.zeros(n)
    for k in range(n):
        for i in range(k + 1):
            poly[i] += x[k] * (-1.0) ** i * math.exp(
                math.lgamma(k + alpha + 1.0) - math.lgamma(i + alpha + 1.0)
                - math.lgamma(k - i + 1.0) - math.lgamma(i + 1.0))
    total = np.zeros_like(R)
    for i in range(n):
        a = alpha + p + i + 1.0
        total += poly[i] * math.gamma(a) * special.gammaincc(a, beta * R)
    return total * beta ** (-(alpha + p + 1.0))


def heat_from_taylor(table: CoefficientTable, t_grid, *, beta: float | None = None,
                     noise=None, route: str = "direct", alpha: float = 2.0) -> MomentReconstruction:
    """K_t(x, z) on ``t_grid`` from a Neumann Taylor table.

    route="direct": a_{l+1} = int K_t t^(s-2-l) dt is the l-th moment of
    phi(r) = K_{1/r} r^(-s), a density that behaves like r^(-s) / volume at 0
    and decays like exp(-d^2 r / 4); hence alpha = -s and K_t = t^(-s) phi(1/t).

    route="derivative": (l+1-s) a_{l+1} is the l-th moment of
    theta(r) = (d/dt K)(1/r) r^(-1-s), which is flat at both ends of (0, inf);
    it is expanded with the given ``alpha`` and K_t = int_{1/t}^inf theta(r) r^(s-1) dr.
    The limit t -> inf of that integral (an estimate of 1/volume) is returned
    in ``limit``, so the mean-zero kernel is ``values - limit``.
    """
    if table.kind != "neumann":
        raise ValueError("heat_from_taylor needs a Neumann coefficient table")
    if route not in ("direct", "derivative"):
        raise ValueError(f"unknown route {route!r}")
    t = np.asarray(t_grid, dtype=float)
    moments = table.values[1:]
    if noise is None:
        noise = _table_noise(table)
    s = table.s
    if route == "direct":
        rec = heat_from_moments(moments, 1.0 / t, alpha=-s, beta=beta, noise=noise)
        return MomentReconstruction(rec.values * t ** (-s), rec.coefficients, rec.condition, rec.residual,
                                    rec.parameter, rec.ridge, rec.reproduced_moments)
    l = np.arange(moments.size)
    rec = heat_from_moments((l + 1.0 - s) * moments, 1.0 / t, alpha=alpha, beta=beta, noise=noise)
    values = _laguerre_tail(rec.coefficients, alpha, rec.parameter, s - 1.0, 1.0 / t)
    limit = float(_laguerre_tail(rec.coefficients, alpha, rec.parameter, s - 1.0, 0.0)[0])
    return MomentReconstruction(values.reshape(t.shape), rec.coefficients, rec.condition, rec.residual,
                                rec.parameter, rec.ridge, rec.reproduced_moments, limit)


def zeroth_from_derivative_route(rec: MomentReconstruction, s: float, alpha: float = 2.0) -> float:
    """a_0 = int (K_t - K_inf) t^(s-1) dt from a derivative-route reconstruction.

    With K_t - K_inf = -int_0^(1/t) theta(r) r^(s-1) dr, exchanging the order
    of integration gives a_0 = -(1/s) int_0^inf theta(r) r^(-1) dr.
    """
    return -float(_laguerre_tail(rec.coefficients, alpha, rec.parameter, -1.0, 0.0)[0]) / s


def kannai_constant(s: float) -> float:
    """kappa_s = int_0^inf (tau + 1)^(-3/2-s) sqrt(tau) d tau = sqrt(pi) Gamma(s) / (2 Gamma(s + 3/2))."""
    return math.sqrt(math.pi) * gamma(s) / (2.0 * gamma(s + 1.5))


def kannai_multiplier(s: float, lam: float, y: float) -> float:
    """y^(2s) int_0^inf (tau + y^2)^(-3/2-s) sin(sqrt(tau lam)) / sqrt(lam) d tau for one eigenvalue.

    After tau = sigma^2 and an integration by parts this is
    2 y^(2s) / (1 + 2s) times Basset's integral. Modes with sqrt(lam) y > 200
    contribute below exp(-200) relative to the constant mode and are returned as 0.
    """
    if math.sqrt(lam) * y > 200.0:
        return 0.0
    return 2.0 * y ** (2.0 * s) / (1.0 + 2.0 * s) * basset_integral(s, lam, y)


def kannai_forward(m: SpectralManifold, s: float, y: float, f: ModeFunction) -> ModeFunction:
    """Apply the Kannai-type transform of the wave kernel to f, mode by mode."""
    if not y > 0:
        raise ValueError("kannai_forward needs y > 0")
    lam = m.eigenvalues(f.coeffs.size)
    # one Basset evaluation per distinct eigenvalue
    uniq, inverse = np.unique(np.round(lam, 10), return_inverse=True)
    mult = np.array([kannai_multiplier(s, float(v), y) for v in uniq])[inverse]
    return ModeFunction(m, mult * f.coeffs)


def _basset_closed(nu: float, omega: float) -> float:
    """B(nu, omega) = int_0^inf (tau^2 + 1)^(-(nu + 1/2)) cos(omega tau) d tau."""
    if omega == 0.0:
        return math.sqrt(math.pi) * gamma(nu) / (2.0 * gamma(nu + 0.5))
    return math.sqrt(math.pi) * (omega / 2.0) ** nu * float(bessel_k(nu, omega)) / gamma(nu + 0.5)


def kannai_moments(s: float, lam: float, L: int) -> np.ndarray:
    """M_l = int_0^1 h(t) t^l dt with h(t) = t^(s-1/2) W(1/t - 1), W(tau) = sin(sqrt(tau lam))/sqrt(lam).

    Equivalently M_l = int_0^inf (tau + 1)^(-(3/2 + s + l)) W(tau) d tau = B(s + l) / (1/2 + s + l).
    """
    w = math.sqrt(lam)
    return np.array([_basset_closed(s + l, w) / (0.5 + s + l) for l in range(L + 1)])


def dirichlet_derivative_moments(s: float, lam: float, L: int) -> np.ndarray:
    """The same moments, obtained from the Dirichlet Poisson profile and its y-derivatives at y = 1.

    With a = y^2 the eigen-mode profile satisfies G(a) = kappa_s a^(-s) psi_s(sqrt(lam a)),
    where G(a) = int (tau + a)^(-3/2-s) W(tau) d tau. Differentiating under the
    integral gives M_l = (-1)^l G^(l)(1) / (3/2 + s)_l, and the a-derivatives of
    the profile are taken in closed form rather than by finite differences.
    """
    kappa = kannai_constant(s)
    out = np.empty(L + 1)
    w = math.sqrt(lam)
    for l in range(L + 1):
        poch = math.exp(math.lgamma(1.5 + s + l) - math.lgamma(1.5 + s))
        if w == 0.0:
            # G(a) = kappa a^(-s)
            deriv = kappa * (-1.0) ** l * math.exp(math.lgamma(s + l) - math.lgamma(s))
        else:
            # a^(-s) psi_s(w sqrt a) = 2^(1-s)/Gamma(s) w^(2s) * [z^(-s) K_s(z)], z = w sqrt a,
            # and d/da = (w^2/2) (1/z) d/dz with (1/z d/dz)^l z^(-s) K_s = (-1)^l z^(-s-l) K_(s+l)
            deriv = (kappa * 2.0 ** (1.0 - s) / gamma(s) * w ** (2.0 * s) * (w * w / 2.0) ** l * (-1.0) ** l
                     * w ** (-s - l) * float(bessel_k(s + l, w)))
        out[l] = (-1.0) ** l * deriv / poch
    return out


def _jacobi_rule(n: int, a: float, b: float):
    """Gauss rule for t^a (1-t)^b on [0, 1], exact to degree 2 max(n + 10, 30) - 1."""
    x, w = special.roots_jacobi(max(n + 10, 30), b, a)
    return (1.0 + x) / 2.0, w / 2.0 ** (a + b + 1.0)


def _jacobi_monomials(n: int, a: float, b: float) -> np.ndarray:
    """Monomial coefficients (extended precision) of the orthonormal polynomials for t^a (1-t)^b on [0, 1]."""
    t, w = _jacobi_rule(n, a, b)
    # Stieltjes procedure on the Gauss nodes gives the exact recurrence up to degree n
    alpha = np.zeros(n + 1)
    beta = np.zeros(n + 2)
    beta[0] = math.sqrt(w.sum())
    p_prev = np.zeros_like(t)
    p = np.full_like(t, 1.0 / beta[0])
    for k in range(n + 1):
        alpha[k] = np.sum(w * t * p * p)
        q = (t - alpha[k]) * p - (beta[k] if k else 0.0) * p_prev
        beta[k + 1] = math.sqrt(np.sum(w * q * q))
        p_prev, p = p, q / beta[k + 1]
    C = np.zeros((n + 1, n + 1), dtype=np.longdouble)
    C[0, 0] = 1.0 / np.longdouble(beta[0])
    for k in range(n):
        new = np.zeros(n + 1, dtype=np.longdouble)
        new[1:] += C[k, :-1]
        new -= np.longdouble(alpha[k]) * C[k]
        if k:
            new -= np.longdouble(beta[k]) * C[k - 1]
        C[k + 1] = new / np.longdouble(beta[k + 1])
    return C


def kannai_inverse(moments, s: float, tau, *, noise: float = 1e-13) -> MomentReconstruction:
    """Recover W(tau) from M_l = int_0^1 h(t) t^l dt, h(t) = t^(s-1/2) W(1/t - 1).

    h is written as t^(s-1) (1-t)^(1/2) g(t), where g(t) = sin(w rho)/(w rho) with
    rho = sqrt((1-t)/t) for a single frequency w (g = 1 for the constant mode),
    and g is expanded in the orthonormal polynomials of that weight. Each
    coefficient is damped by |c|^2 / (|c|^2 + sigma^2), sigma being its
    propagated moment noise.

    Args:
        moments: array (L+1,) or (L+1, n) of moment vectors.
        tau: grid where W is wanted.
    """
    M = np.asarray(moments, dtype=float)
    squeeze = M.ndim == 1
    if squeeze:
        M = M[:, None]
    L = M.shape[0] - 1
    tau = np.asarray(tau, dtype=float)
    t = 1.0 / (tau + 1.0)
    C = _jacobi_monomials(L, s - 1.0, 0.5)
    c = np.asarray(C @ M.astype(np.longdouble), dtype=float)
    sigma = noise * np.asarray(np.abs(C) @ np.abs(M).astype(np.longdouble), dtype=float)
    damp = c * c / (c * c + sigma * sigma + 1e-300)
    c_reg = c * damp
    powers = np.vander(t, L + 1, increasing=True).astype(np.longdouble)
    P = np.asarray(powers @ C.T, dtype=float)  # P[i, n] = p_n(t_i)
    g = P @ c_reg
    # W = h / t^(s-1/2) = t^(-1/2) (1-t)^(1/2) g
    W = (np.sqrt((1.0 - t) / t))[:, None] * g
    cond = float(np.linalg.cond(np.asarray(C, dtype=float)))
    # moments of the reconstruction, exactly, by the Gauss rule of the weight
    tq, wq = _jacobi_rule(L, s - 1.0, 0.5)
    Pq = np.asarray(np.vander(tq, L + 1, increasing=True).astype(np.longdouble) @ C.T, dtype=float)
    reproduced = (np.vander(tq, L + 1, increasing=True) * wq[:, None]).T @ (Pq @ c_reg)
    resid = float(np.max(np.abs(reproduced - M) / np.maximum(np.abs(M), 1e-300)))
    values = W[:, 0] if squeeze else W
    return MomentReconstruction(values, c_reg[:, 0] if squeeze else c_reg, cond, resid, float(L), 0.0,
                                reproduced[:, 0] if squeeze else reproduced)


def fractional_power_constant(nu: float) -> float:
    """c_nu with lam^nu c_nu = f.p. int_0^inf cos(t sqrt(lam)) t^(-1-2nu) dt, i.e. Gamma(-2nu) cos(pi nu).

    Written as -pi / (2 Gamma(1+2nu) sin(pi nu)), finite at half-integers.
    """
    if nu <= 0 or float(nu).is_integer():
        raise ValueError("nu must be positive and not an integer")
    return -math.pi / (2.0 * gamma(1.0 + 2.0 * nu) * math.sin(math.pi * nu))


def wave_from_fractional_moments(D, s: float, tau, distance: float, *, noise=1e-13) -> MomentReconstruction:
    """Smoothed wave pairing W(tau) = <sin(sqrt(tau) sqrt(-Delta))/sqrt(-Delta) f, delta_x> from D_l = <(-Delta)^(s+l) f, delta_x>.

    Here tau is the squared time. When f vanishes within ``distance`` of x,
    finite propagation speed makes W vanish for tau < distance^2, and off the
    diagonal D_l c_nu / (1 + 2nu) = int W(tau) tau^(-3/2-nu) d tau / 2 with nu = s + l.
    In u = 1 / tau these are power moments of u^(s-1/2) W(1/u) on [0, 1/distance^2],
    a Hausdorff problem solved with orthonormal polynomials for the weight
    v^(s-1) on [0, 1]. The constant mode grows like c sqrt(tau); c is returned
    in ``limit``.

    Args:
        D: D_0, ..., D_L.
        noise: relative noise of D (scalar or per entry).
    """
    D = np.asarray(D, dtype=float)
    L = D.size - 1
    if distance <= 0:
        raise ValueError("distance must be positive")
    tau = np.asarray(tau, dtype=float)
    U = 1.0 / distance**2
    l = np.arange(L + 1)
    nu = s + l
    const = np.array([2.0 * fractional_power_constant(float(n)) / (1.0 + 2.0 * n) for n in nu])
    M = const * D / U ** (l + 1.0)
    Mn = M * np.broadcast_to(np.asarray(noise, dtype=float), M.shape)
    C = _jacobi_monomials(L, s - 1.0, 0.0)
    c = np.asarray(C @ M.astype(np.longdouble), dtype=float)
    sigma = np.asarray(np.abs(C) @ np.abs(Mn).astype(np.longdouble), dtype=float) + 1e-16 * np.abs(c)
    c_reg = c * (c * c / (c * c + sigma * sigma + 1e-300))
    v = 1.0 / (U * np.maximum(tau, 1e-300))
    inside = v < 1.0
    P = np.asarray(np.vander(np.minimum(v, 1.0), L + 1, increasing=True).astype(np.longdouble) @ C.T, dtype=float)
    # h(U v) = v^(s-1) g(v) and W = h / u^(s-1/2)
    g = P @ c_reg
    W = np.where(inside, v ** (s - 1.0) * g / (U * v) ** (s - 0.5), 0.0)
    g0 = float(np.asarray(C[:, 0], dtype=float) @ c_reg)
    tq, wq = _jacobi_rule(L, s - 1.0, 0.0)
    Pq = np.asarray(np.vander(tq, L + 1, increasing=True).astype(np.longdouble) @ C.T, dtype=float)
    reproduced = (np.vander(tq, L + 1, increasing=True) * wq[:, None]).T @ (Pq @ c_reg)
    resid = float(np.max(np.abs(reproduced - M) / np.maximum(np.abs(M), 1e-300)))
    cond = float(np.linalg.cond(np.asarray(C, dtype=float)))
    return MomentReconstruction(W, c_reg, cond, resid, U, 0.0, reproduced, g0 * U ** (1.0 - s))


def write_coefficient_tables(path, tables) -> None:
    """CSV with header kind,s,x,z,index,value_scaled,scale_exponent.

    value = value_scaled * 10**scale_exponent; Neumann rows store a_j / (4^j j!).
    Points are written as space-separated coordinates.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "s", "x", "z", "index", "value_scaled", "scale_exponent"])
        for tab in tables:
            xs = " ".join(repr(v) for v in tab.x)
            zs = " ".join(repr(v) for v in tab.z)
            for j, v, e in tab.rows():
                w.writerow([tab.kind, repr(tab.s), xs, zs, j, repr(float(v)), repr(float(e))])
