"""Source-to-solution maps restricted to an open subset O.

Every operator acts diagonally in the eigenbasis and is then sampled on a
quadrature grid of O:

* ``frac_neumann``    f -> u_f with u_f = sum_{k >= 1} lambda_k^(-s) f_k phi_k
* ``frac_dirichlet``  f -> (-Delta)^s f
* ``local``           f -> sum_{k >= 1} lambda_k^(-1) f_k phi_k
* ``wave``            a(t) f(x) -> u(t, x), the solution of u_tt - Delta u = a f
                      with zero Cauchy data, by Duhamel's formula

Sources have to be supported in O. At a finite mode cutoff this only holds
approximately, so the support check measures the leakage of the
reconstructed source on a grid of the complement.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .extension import ExtensionField, integrated_extension_modes
from .kernels import weighted_derivative_constant
from .specfun import integrate_interval
from .spectra import ModeFunction, SpectralManifold, Subset, project

__all__ = [
    "StsOperator",
    "SupportError",
    "BridgeResult",
    "projected_bump",
    "mean_zero_bump",
    "support_leakage",
    "wave_sts",
    "wave_sts_modes",
    "bridge_to_local",
    "recover_u_from_vbar",
    "operator_matrix",
    "commutator_norm",
    "write_operator_matrix",
]

_KINDS = ("frac_neumann", "frac_dirichlet", "local", "wave")
_NEEDS_MEAN_ZERO = ("frac_neumann", "local")


class SupportError(ValueError):
    """A source is not (numerically) supported in the subset."""


def _check_order(s):
    if s is None or not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")


def _power(lam, p: float) -> np.ndarray:
    """lam^p on positive eigenvalues, 0 on the constant mode."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    pos = lam > 0
    out[pos] = lam[pos] ** p
    return out


def _is_mean_zero(f: ModeFunction, tol: float = 1e-12) -> bool:
    return abs(f.coeffs[0]) <= tol * max(1.0, f.l2_norm())


def support_leakage(f: ModeFunction, subset: Subset, level: int = 2) -> float:
    """sup |f| on a grid of M outside O, relative to sup |f| on O."""
    m = f.manifold
    nodes, _ = m.quadrature_grid(level, min_resolution=m.resolution(f.coeffs.size))
    values = np.abs(f(nodes))
    inside = subset.contains(nodes)
    inner, _ = subset.quadrature_grid(64)
    peak = max(float(np.max(np.abs(f(inner)))), float(np.max(values[inside], initial=0.0)))
    if peak == 0.0:
        return 0.0
    return float(np.max(values[~inside], initial=0.0)) / peak


def projected_bump(subset: Subset, n_modes: int, center=None, radius: float | None = None) -> ModeFunction:
    """Eigen-projection of a Gaussian bump that is negligible outside ``radius`` around ``center``."""
    m = subset.manifold
    return project(m, subset.gaussian_bump(center, radius), n_modes - 1)


def mean_zero_bump(subset: Subset, n_modes: int, center=None, radius: float | None = None) -> ModeFunction:
    """-Delta of a projected Gaussian bump, rescaled to unit L2 norm.

    Applying -Delta kills the constant mode exactly and keeps the support, so
    the result is an admissible source for the Neumann-type maps.
    """
    b = projected_bump(subset, n_modes, center, radius).spectral_multiply(lambda lam: lam)
    return b * (1.0 / b.l2_norm())


@dataclass(frozen=True, eq=False)
class StsOperator:
    """L_{s,O}-type map of one kind, sampled on a quadrature grid of O."""

    manifold: SpectralManifold
    subset: Subset
    kind: str
    s: float | None = None
    n_modes: int = 96
    grid_size: int = 64
    leak_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind in ("frac_neumann", "frac_dirichlet"):
            _check_order(self.s)
        if self.subset.manifold != self.manifold:
            raise ValueError("subset lives on a different manifold")

    def grid(self):
        """Nodes and weights of the output grid on O.

        ``grid_size`` is a floor; the grid also grows with the mode cutoff so that
        pairings of two band-limited functions are integrated accurately.
        """
        return self.subset.quadrature_grid(max(self.grid_size, 6 * self.manifold.resolution(self.n_modes)))

    def multiplier(self, lam) -> np.ndarray:
        if self.kind == "frac_neumann":
            return _power(lam, -self.s)
        if self.kind == "frac_dirichlet":
            return _power(lam, self.s)
        if self.kind == "local":
            return _power(lam, -1.0)
        raise ValueError("the wave map is time dependent; use wave_sts")

    def check_source(self, f: ModeFunction) -> float:
        """Raise unless f is supported in O (and mean-zero where required); return the leakage."""
        if self.kind in _NEEDS_MEAN_ZERO and not _is_mean_zero(f):
            raise ValueError(f"{self.kind} needs a mean-zero source")
        leak = support_leakage(f, self.subset)
        if leak > self.leak_tol:
            raise SupportError(f"source leaks {leak:.3g} outside O (tolerance {self.leak_tol:g})")
        return leak

    def apply_modes(self, f: ModeFunction, *, check: bool = True) -> ModeFunction:
        """The diagonal spectral action, before restriction to O."""
        if check:
            self.check_source(f)
        if f.coeffs.size > self.n_modes:
            f = ModeFunction(self.manifold, f.coeffs[: self.n_modes])
        return f.spectral_multiply(self.multiplier)

    def apply(self, f: ModeFunction, *, check: bool = True) -> np.ndarray:
        """Output samples on O's grid."""
        return self.apply_modes(f, check=check)(self.grid()[0])

    def pairing(self, f: ModeFunction, h: ModeFunction) -> float:
        """(L f, h) in L2(O)."""
        self.check_source(h)
        nodes, weights = self.grid()
        return float(weights @ (self.apply(f) * h(nodes)))


def _time_panels(a: float, b: float, omega: float, breakpoints) -> np.ndarray:
    """Panel edges on [a, b] at the breakpoints and at most a quarter period apart."""
    edges = {a, b}
    edges.update(p for p in breakpoints if a < p < b)
    edges = sorted(edges)
    out = [edges[0]]
    step = math.pi / (2.0 * max(omega, 1e-300))
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((hi - lo) / step)) if omega > 0 else 1
        out.extend(np.linspace(lo, hi, n + 1)[1:])
    return np.asarray(out)


def _duhamel(amplitude, lam: float, t: float, support, breakpoints, rel_tol):
    """u(t) and u'(t) of u'' + lam u = a(t), u(0) = u'(0) = 0."""
    lo, hi = 0.0, t
    if support is not None:
        lo, hi = max(lo, support[0]), min(hi, support[1])
    if hi <= lo:
        return 0.0, 0.0
    omega = math.sqrt(lam) if lam > 0 else 0.0
    edges = _time_panels(lo, hi, omega, breakpoints)

    def sine_part(r):
        a = np.asarray(amplitude(r), dtype=float)
        return a * (np.sin((t - r) * omega) / omega if omega > 0 else t - r)

    def cosine_part(r):
        return np.asarray(amplitude(r), dtype=float) * np.cos((t - r) * omega)

    u = sum(integrate_interval(sine_part, a, b, rel_tol) for a, b in zip(edges[:-1], edges[1:]))
    ut = sum(integrate_interval(cosine_part, a, b, rel_tol) for a, b in zip(edges[:-1], edges[1:]))
    return u, ut


def wave_sts_modes(f: ModeFunction, amplitude: Callable, t: float, *, support=None, breakpoints=(),
                   rel_tol: float = 1e-10) -> tuple[ModeFunction, ModeFunction]:
    """Coefficients of u(t) and du/dt(t) for the source a(t) f(x).

    Per mode, u_k(t) = f_k int_0^t a(r) sin((t - r) sqrt(lam_k)) / sqrt(lam_k) dr,
    which becomes f_k int_0^t a(r) (t - r) dr on the constant mode. ``support``
    bounds the support of a and ``breakpoints`` mark where a changes quickly.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    m = f.manifold
    lam = m.eigenvalues(f.coeffs.size)
    u = np.zeros(f.coeffs.size)
    ut = np.zeros(f.coeffs.size)
    cache: dict[float, tuple[float, float]] = {}
    for k, fk in enumerate(f.coeffs):
        if fk == 0.0:
            continue
        key = round(float(lam[k]), 10)
        if key not in cache:
            cache[key] = _duhamel(amplitude, float(lam[k]), t, support, breakpoints, rel_tol)
        u[k], ut[k] = fk * cache[key][0], fk * cache[key][1]
    return ModeFunction(m, u), ModeFunction(m, ut)


def wave_sts(m: SpectralManifold, subset: Subset, f: ModeFunction, amplitude: Callable, t: float, x, *,
             support=None, breakpoints=(), rel_tol: float = 1e-10, leak_tol: float = 1e-8) -> np.ndarray:
    """Wave source-to-solution map for F(t, x) = a(t) f(x), evaluated at points x of O."""
    if f.manifold != m:
        raise ValueError("source lives on a different manifold")
    if support is not None and support[0] < 0:
        raise ValueError("the source must vanish for t < 0")
    pts = m.as_points(x)
    if not np.all(subset.contains(pts)):
        raise ValueError("evaluation points must lie in O")
    if not f.l2_norm():
        return np.zeros(pts.shape[0])
    leak = support_leakage(f, subset)
    if leak > leak_tol:
        raise SupportError(f"source leaks {leak:.3g} outside O (tolerance {leak_tol:g})")
    u, _ = wave_sts_modes(f, amplitude, t, support=support, breakpoints=breakpoints, rel_tol=rel_tol)
    return u(pts)


@dataclass(frozen=True)
class BridgeResult:
    """The integrated Neumann extension of f next to (-Delta)^(s-1) u_f."""

    vbar: ModeFunction
    local: ModeFunction
    vbar_samples: np.ndarray
    local_samples: np.ndarray

    def mode_ratios(self) -> np.ndarray:
        """vbar_k / local_k on the modes where f is nonzero."""
        keep = np.abs(self.local.coeffs) > 1e-14 * max(1e-300, float(np.max(np.abs(self.local.coeffs))))
        return self.vbar.coeffs[keep] / self.local.coeffs[keep]


def bridge_to_local(m: SpectralManifold, s: float, subset: Subset, f: ModeFunction, *, grid_size: int = 64,
                    check_support: bool = True, rel_tol: float = 1e-11) -> BridgeResult:
    """vbar_f = int_0^inf t^(1-2s) u_f(., t) dt of the Neumann extension, and (-Delta)^(s-1) u_f.

    The first is computed mode by mode by half-line quadrature, the second
    spectrally from u_f = (-Delta)^(-s) f; their ratio is d_s on every mode.
    """
    _check_order(s)
    if not _is_mean_zero(f):
        raise ValueError("the bridge needs a mean-zero source")
    if check_support:
        leak = support_leakage(f, subset)
        if leak > 1e-8:
            raise SupportError(f"source leaks {leak:.3g} outside O")
    f = f.without_mean()
    field = ExtensionField(m, s, "neumann", f)
    vbar = integrated_extension_modes(field, 0.0, rel_tol=rel_tol)
    u_f = f.spectral_multiply(lambda lam: _power(lam, -s))
    local = u_f.spectral_multiply(lambda lam: _power(lam, s - 1.0))
    nodes = subset.quadrature_grid(grid_size)[0]
    return BridgeResult(vbar, local, vbar(nodes), local(nodes))


def recover_u_from_vbar(m: SpectralManifold, s: float, vbar: ModeFunction) -> ModeFunction:
    """u_f from vbar_f through the order-(1-s) weighted Neumann trace of the Dirichlet extension of vbar.

    Mode k maps to d_{1-s} lambda_k^(1-s) vbar_k. With vbar from
    ``bridge_to_local`` this returns u_f exactly (the trace itself is -u_f).
    """
    _check_order(s)
    if vbar.manifold != m:
        raise ValueError("vbar lives on a different manifold")
    if not _is_mean_zero(vbar):
        raise ValueError("vbar must have zero mean")
    c = weighted_derivative_constant(1.0 - s)
    return vbar.spectral_multiply(lambda lam: c * _power(lam, 1.0 - s))


def _basis_sources(op: StsOperator, centers, radius):
    make = mean_zero_bump if op.kind in _NEEDS_MEAN_ZERO else projected_bump
    return [make(op.subset, op.n_modes, c, radius) for c in centers]


def operator_matrix(op: StsOperator, centers, radius: float) -> np.ndarray:
    """Dense matrix [(L b_j, b_i)_{L2(O)}] on a basis of bumps centred at ``centers``."""
    sources = _basis_sources(op, centers, radius)
    nodes, weights = op.grid()
    samples = np.stack([b(nodes) for b in sources])
    images = np.stack([op.apply(b) for b in sources])
    return (samples * weights) @ images.T


def commutator_norm(op: StsOperator, n_modes: int | None = None) -> float:
    """Frobenius norm of [L, -Delta] on the truncated eigenbasis, relative to |L| |Delta|."""
    n = op.n_modes if n_modes is None else n_modes
    m = op.manifold
    lam = m.eigenvalues(n)
    columns = [op.apply_modes(ModeFunction(m, np.eye(n)[k]), check=False).coeffs for k in range(n)]
    L = np.stack(columns, axis=1)
    D = np.diag(lam)
    scale = np.linalg.norm(L) * np.linalg.norm(D)
    return float(np.linalg.norm(L @ D - D @ L) / scale) if scale else 0.0


def write_operator_matrix(path, op: StsOperator, centers, radius: float) -> np.ndarray:
    """Write ``row,col,value`` to ``path`` and the bump basis to ``<path>.basis.csv``."""
    M = operator_matrix(op, centers, radius)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "value"])
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                w.writerow([i, j, repr(float(M[i, j]))])
    centers = [np.atleast_1d(np.asarray(c, dtype=float)) for c in centers]
    profile = "laplacian_gaussian" if op.kind in _NEEDS_MEAN_ZERO else "gaussian"
    with open(f"{path}.basis.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"c{i}" for i in range(centers[0].size)] + ["radius", "sigma", "profile"])
        for i, c in enumerate(centers):
            w.writerow([i] + [repr(float(v)) for v in c] + [repr(float(radius)), repr(radius / 6.5), profile])
    return M
