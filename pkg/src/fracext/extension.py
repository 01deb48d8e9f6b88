"""The degenerate-elliptic extension of boundary data on M x (0, inf).

For data f = sum_k f_k phi_k the extension solves

    div_{x,y}(y^(1-2s) grad u) = 0,   u -> 0 as y -> inf,

mode by mode, u(x, y) = sum_k c_k(y) phi_k(x), where c_k solves

    c'' + (1 - 2s)/y c' - lambda_k c = 0.

Dirichlet data give c_k(y) = f_k psi_s(sqrt(lambda_k) y); Neumann data
(mean-zero f) give c_k(y) = f_k lambda_k^(-s) psi_s(sqrt(lambda_k) y). The
weighted normal derivative y^(1-2s) d/dy of psi_s(sqrt(lambda) y) tends to
-d_s lambda^s, d_s = 2^(1-2s) Gamma(1-s) / Gamma(s).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .kernels import dirichlet_profile, weighted_derivative_constant
from .specfun import bessel_k_scaled, gamma, integrate_halfline
from .spectra import ModeFunction, SpectralManifold

__all__ = [
    "ExtensionField",
    "EnergyNorm",
    "extend",
    "neumann_trace",
    "energy_norm",
    "integrated_extension",
    "integrated_extension_modes",
    "integrated_constant",
    "write_extension_slice",
]

_KINDS = ("dirichlet", "neumann")


def _profile_slope(s: float, r: np.ndarray) -> np.ndarray:
    """d/dr psi_s(r) = -2^(1-s)/Gamma(s) r^s K_(1-s)(r) for r > 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    if np.any(pos):
        rp = r[pos]
        with np.errstate(under="ignore"):
            out[pos] = -(2.0 ** (1.0 - s) / gamma(s)) * np.exp(s * np.log(rp) - rp) * bessel_k_scaled(1.0 - s, rp)
    return out


@dataclass(frozen=True, eq=False)
class ExtensionField:
    """Extension of ``data`` of order ``s`` with a Dirichlet or Neumann condition at y = 0."""

    manifold: SpectralManifold
    s: float
    kind: str
    data: ModeFunction

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"fractional order s must lie in (0, 1), got {self.s}")
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.data.manifold is not self.manifold and self.data.manifold != self.manifold:
            raise ValueError("data lives on a different manifold")
        if self.kind == "neumann" and abs(self.data.coeffs[0]) > 1e-12 * max(1.0, self.data.l2_norm()):
            raise ValueError("Neumann data must have zero mean")

    @property
    def n_modes(self) -> int:
        return self.data.coeffs.size

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.manifold.eigenvalues(self.n_modes)

    def _scale(self) -> np.ndarray:
        """Coefficient in front of psi_s(sqrt(lambda_k) y) for each mode."""
        f = self.data.coeffs
        if self.kind == "dirichlet":
            return f.copy()
        lam = self.eigenvalues
        out = np.zeros_like(f)
        pos = lam > 0
        out[pos] = f[pos] * lam[pos] ** (-self.s)
        return out

    def profiles(self, y) -> np.ndarray:
        """c_k(y) for every mode; shape y.shape + (n_modes,)."""
        y = np.asarray(y, dtype=float)
        r = np.sqrt(self.eigenvalues) * y[..., None]
        return self._scale() * dirichlet_profile(self.s, r)

    def profile_derivatives(self, y) -> np.ndarray:
        """c_k'(y), from K_s' = -K_(1-s) - (s/z) K_s rearranged for z^s K_s."""
        y = np.asarray(y, dtype=float)
        root = np.sqrt(self.eigenvalues)
        return self._scale() * root * _profile_slope(self.s, root * y[..., None])


def extend(field: ExtensionField, x, y) -> np.ndarray:
    """u(x, y) = sum_k c_k(y) phi_k(x) for y > 0; shape (n_points,) or (n_y, n_points)."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr <= 0):
        raise ValueError("extend needs y > 0")
    basis = field.manifold.basis(x, field.n_modes)
    return field.profiles(y_arr) @ basis.T


def neumann_trace(field: ExtensionField, x) -> np.ndarray:
    """lim_{y -> 0} y^(1-2s) du/dy = -d_s sum_k lambda_k^s f_k phi_k(x) for Dirichlet data."""
    if field.kind != "dirichlet":
        raise ValueError("neumann_trace is defined for Dirichlet data")
    lam = field.eigenvalues
    mult = np.where(lam > 0, np.abs(lam) ** field.s, 0.0)
    coeffs = -weighted_derivative_constant(field.s) * mult * field.data.coeffs
    return field.manifold.basis(x, field.n_modes) @ coeffs


@dataclass(frozen=True)
class EnergyNorm:
    """Weighted Dirichlet energy int int y^(1-2s) |grad u|^2 of one gradient component."""

    component: str
    closed_form: float
    quadrature: float

    @property
    def discrepancy(self) -> float:
        scale = max(abs(self.closed_form), abs(self.quadrature))
        return 0.0 if scale == 0.0 else abs(self.closed_form - self.quadrature) / scale


def _bessel_square_moment(nu: float) -> float:
    """int_0^inf z K_nu(z)^2 dz = pi nu / (2 sin(pi nu)) for |nu| < 1."""
    return math.pi * nu / (2.0 * math.sin(math.pi * nu))


def _energy_closed_form(field: ExtensionField, component: str) -> float:
    s = field.s
    lam = field.eigenvalues
    pos = lam > 0
    f2 = field.data.coeffs[pos] ** 2
    amp = (2.0 ** (1.0 - s) / gamma(s)) ** 2
    # tangential part carries K_s, the normal part K_(1-s)
    nu = s if component == "tangential" else 1.0 - s
    power = -s if field.kind == "neumann" else s
    return amp * _bessel_square_moment(nu) * float(np.sum(f2 * lam[pos] ** power))


def _five_point(fun, h):
    """Fourth-order central difference (f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h."""
    return (fun(-2.0) - 8.0 * fun(-1.0) + 8.0 * fun(1.0) - fun(2.0)) / (12.0 * h)


def _gradient_squared(field: ExtensionField, nodes: np.ndarray, y: np.ndarray, component: str,
                      step: float = 1e-3) -> np.ndarray:
    """|grad_x u|^2 (finite differences in x) or (du/dy)^2 (profile slopes) on ``nodes`` at each y.

    A difference quotient in y is useless near y = 0, where u is dominated by
    its boundary value, so the normal part uses the analytic slope of each profile.
    """
    m = field.manifold
    n = field.n_modes
    if component == "normal":
        return (field.profile_derivatives(y) @ m.basis(nodes, n).T) ** 2
    prof = field.profiles(y)
    d = m.ndim_coords
    grads = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        grads.append(_five_point(lambda j: prof @ m.basis(nodes + j * e, n).T, step))
    grads = np.stack(grads, axis=-1)  # (n_y, n_nodes, d)
    ginv = m.inverse_metric(nodes)
    return np.einsum("yni,nij,ynj->yn", grads, ginv, grads)


def _energy_quadrature(field: ExtensionField, component: str, rel_tol: float) -> float:
    m = field.manifold
    nodes, weights = m.quadrature_grid(1, min_resolution=m.resolution(field.n_modes))
    s = field.s

    def density(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = _gradient_squared(field, nodes, y, component) @ weights
        return y ** (1.0 - 2.0 * s) * out

    return float(integrate_halfline(density, rel_tol=rel_tol))


def energy_norm(field: ExtensionField, component: str, *, rel_tol: float = 1e-8) -> EnergyNorm:
    """Closed-form energy of one gradient component next to an independent 2-D quadrature.

    The closed form uses int z K_nu(z)^2 dz with nu = s (tangential) or
    nu = 1 - s (normal) and sums |f_k|^2 lambda_k^(-s) (Neumann) or
    |f_k|^2 lambda_k^s (Dirichlet). The quadrature differentiates the evaluated
    field on a product grid in x and integrates over y in log scale.
    """
    if component not in ("tangential", "normal"):
        raise ValueError("component must be 'tangential' or 'normal'")
    closed = _energy_closed_form(field, component)
    if not np.any(field.data.coeffs[field.eigenvalues > 0]):
        return EnergyNorm(component, 0.0, 0.0)
    return EnergyNorm(component, closed, _energy_quadrature(field, component, rel_tol))


def integrated_constant(s: float) -> float:
    """c with int_0^inf t^(1-2s) psi_s(sqrt(lambda) t) dt = c lambda^(s-1); it equals d_s."""
    return 2.0 ** (1.0 - s) / gamma(s) * 2.0 ** (-s) * gamma(1.0 - s)


def _mode_integral(s: float, lam: float, y0: float, rel_tol: float) -> float:
    root = math.sqrt(lam)

    def g(u):
        t = y0 + u
        return t ** (1.0 - 2.0 * s) * dirichlet_profile(s, root * t)

    return float(integrate_halfline(g, rel_tol=rel_tol, abs_tol=1e-300))


def integrated_extension_modes(field: ExtensionField, y0: float = 0.0, *, rel_tol: float = 1e-11) -> ModeFunction:
    """Coefficients of int_{y0}^inf t^(1-2s) u(., t) dt, one half-line quadrature per distinct eigenvalue.

    Works for both kinds; Dirichlet data must have zero mean for the integral to exist.
    """
    if y0 < 0:
        raise ValueError("lower limit must be nonnegative")
    f = field.data.coeffs
    if abs(f[0]) > 1e-12 * max(1.0, field.data.l2_norm()):
        raise ValueError("the integrated extension needs mean-zero data")
    lam = field.eigenvalues
    scale = field._scale()
    out = np.zeros_like(f)
    cache: dict[float, float] = {}
    for k in range(1, f.size):
        if scale[k] == 0.0:
            continue
        key = round(float(lam[k]), 10)
        if key not in cache:
            cache[key] = _mode_integral(field.s, float(lam[k]), y0, rel_tol)
        out[k] = scale[k] * cache[key]
    return ModeFunction(field.manifold, out)


def integrated_extension(field: ExtensionField, x, y0: float = 0.0, *, rel_tol: float = 1e-11) -> np.ndarray:
    """int_{y0}^inf t^(1-2s) u(x, t) dt for data f with zero mean.

    At y0 = 0 this is d_s (-Delta)^(s-1) f. As a function of y0 it solves the
    extension equation with s replaced by 1 - s, and its order-(1-s) weighted
    normal derivative at 0 is -f.
    """
    return integrated_extension_modes(field, y0, rel_tol=rel_tol)(x)


def write_extension_slice(path, field: ExtensionField, x, y_values) -> None:
    """CSV with the point coordinates, y and u(x, y)."""
    m = field.manifold
    pts = m.as_points(x)
    y_values = np.asarray(y_values, dtype=float)
    values = extend(field, pts, y_values)
    names = [f"x{i}" for i in range(m.ndim_coords)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["y", "value"])
        for j, y in enumerate(y_values):
            for i, p in enumerate(pts):
                w.writerow([repr(float(c)) for c in p] + [repr(float(y)), repr(float(values[j, i]))])
