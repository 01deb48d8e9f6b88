"""Reconstruction of heat and wave kernels from source-to-solution data on two patches.

Sources are applied on a patch omega_2 and the responses are observed on a
disjoint patch omega_1, both inside O. The pipeline only knows the metric on
O: it differentiates the responses in x (iterated Laplacians), deconvolves
them against the known probe profiles in z, and so reads off

    Q_p(x, z) = sum_k lambda_k^(p - s) phi_k(x) phi_k(z)   (Neumann data)
    D_p(x, z) = sum_k lambda_k^(p + s) phi_k(x) phi_k(z)   (Dirichlet data)

at a pair x in omega_1, z in omega_2. These are the Taylor coefficients of
the Poisson kernels at y = 0 up to explicit gamma factors, and feed the
moment inversions in ``transforms``.

Patches are arcs of a circle. Everything the pipeline learns about the
manifold goes through a ``LocalGeometry`` handle, which answers metric
queries on O and refuses (and records) anything else.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as cheb

from .spectra import Arc, Circle
from .sts import StsOperator, projected_bump
from .transforms import (
    ILL_CONDITIONED,
    CoefficientTable,
    MomentReconstruction,
    heat_from_taylor,
    wave_from_fractional_moments,
    zeroth_from_derivative_route,
)

__all__ = [
    "AuditViolation",
    "LocalGeometry",
    "PatchData",
    "RecoveredTaylor",
    "HeatReconstruction",
    "WaveReconstruction",
    "measure_patch_data",
    "recover_taylor_coefficients",
    "reconstruct_heat",
    "reconstruct_wave",
    "write_report",
    "MAX_ORDER",
]

MAX_ORDER = 8
_TRUNCATION = 6.5  # probe radius in units of the Gaussian width


class AuditViolation(RuntimeError):
    """The reconstruction asked for more than the metric on O."""


class LocalGeometry:
    """Capability handle on a circle that only exposes the metric inside O.

    Any other attribute access (eigenvalues, basis, kernels built on top of
    them) raises ``AuditViolation`` and is logged in ``violations``.
    """

    __slots__ = ("_manifold", "_center", "_half_width", "violations", "queries")

    def __init__(self, manifold: Circle, subset: Arc):
        if not isinstance(manifold, Circle) or not isinstance(subset, Arc):
            raise TypeError("patch reconstruction is implemented for arcs of a circle")
        self._manifold = manifold
        self._center = subset.center_angle
        self._half_width = subset.half_width
        self.violations: list[str] = []
        self.queries = 0

    def __getattr__(self, name):
        if name.startswith("__"):
            raise AttributeError(name)
        self.violations.append(name)
        raise AuditViolation(f"reconstruction touched {name!r} outside the metric on O")

    @property
    def clean(self) -> bool:
        return not self.violations

    def _inside(self, theta) -> bool:
        d = np.abs(np.mod(np.asarray(theta, dtype=float) - self._center + math.pi, 2.0 * math.pi) - math.pi)
        return bool(np.all(d <= self._half_width + 1e-12))

    def inverse_metric(self, theta) -> float:
        """g^(theta theta) at points of O (constant on a circle, but only asked where allowed)."""
        if not self._inside(theta):
            self.violations.append("inverse_metric outside O")
            raise AuditViolation("metric requested outside O")
        self.queries += 1
        return float(self._manifold.inverse_metric(np.atleast_1d(theta))[0, 0, 0])

    def arc_length(self, theta) -> float:
        """Length of one radian of angle at points of O."""
        return 1.0 / math.sqrt(self.inverse_metric(theta))

    def contains_arc(self, center: float, half_width: float) -> bool:
        return self._inside([center - half_width, center + half_width]) and half_width < self._half_width


def _angle_gap(a: float, b: float) -> float:
    d = abs((a - b) % (2.0 * math.pi))
    return min(d, 2.0 * math.pi - d)


@dataclass(frozen=True, eq=False)
class PatchData:
    """Responses on omega_1 to Gaussian probes in omega_2.

    Probe i is g_i(theta) = exp(-(l(theta - c_i))^2 / (2 sigma^2)) with l the
    arc length per radian; the applied source is -Delta g_i on the Neumann
    branch (so that it has zero mean) and g_i itself on the Dirichlet branch.
    ``responses[i, j]`` is the output at ``nodes[j]``.
    """

    geometry: LocalGeometry
    s: float
    branch: str
    omega1: tuple
    omega2: tuple
    centers: np.ndarray
    sigma: float
    nodes: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        if self.branch not in ("neumann", "dirichlet"):
            raise ValueError("branch must be 'neumann' or 'dirichlet'")
        (c1, h1), (c2, h2) = self.omega1, self.omega2
        if _angle_gap(c1, c2) <= h1 + h2:
            raise ValueError("the closures of omega_1 and omega_2 must be disjoint")
        for c, h in (self.omega1, self.omega2):
            if not self.geometry.contains_arc(c, h):
                raise ValueError("patches must lie inside O")
        if self.responses.shape != (len(self.centers), len(self.nodes)):
            raise ValueError("responses must have shape (n_probes, n_nodes)")

    @property
    def n_probes(self) -> int:
        return len(self.centers)

    def probe(self, i: int):
        c, scale = self.centers[i], self.geometry.arc_length(self.centers[i])
        return lambda theta: np.exp(-0.5 * (scale * (np.asarray(theta) - c) / self.sigma) ** 2)

    def _omega2_rule(self):
        c2, h2 = self.omega2
        panels = max(8, math.ceil(2.0 * h2 * self.geometry.arc_length(c2) / self.sigma))
        x, w = np.polynomial.legendre.leggauss(16)
        edges = np.linspace(c2 - h2, c2 + h2, panels + 1)
        half = 0.5 * np.diff(edges)
        nodes = (0.5 * (edges[1:] + edges[:-1])[:, None] + half[:, None] * x).ravel()
        weights = (half[:, None] * w).ravel() * self.geometry.arc_length(c2)
        return nodes, weights

    def gram(self) -> np.ndarray:
        """L2(omega_2) Gram matrix of the probe profiles."""
        nodes, weights = self._omega2_rule()
        G = np.stack([self.probe(i)(nodes) for i in range(self.n_probes)])
        return (G * weights) @ G.T

    @property
    def gram_condition(self) -> float:
        return float(np.linalg.cond(self.gram()))


def _chebyshev_nodes(center: float, half_width: float, n: int) -> np.ndarray:
    return center + half_width * np.cos(math.pi * (np.arange(n) + 0.5) / n)


def measure_patch_data(op: StsOperator, omega1: Arc, omega2: Arc, *, n_probes: int = 12, sigma: float = 0.03,
                       n_nodes: int = 64) -> PatchData:
    """Apply Gaussian probes in omega_2 through ``op`` and record the responses on omega_1.

    This is the measurement step: the ground-truth operator is used here and
    nowhere in the reconstruction.
    """
    if op.kind == "frac_neumann":
        branch = "neumann"
    elif op.kind == "frac_dirichlet":
        branch = "dirichlet"
    else:
        raise ValueError("patch data come from a fractional Neumann or Dirichlet map")
    O = op.subset
    geometry = LocalGeometry(op.manifold, O)
    c2, h2 = omega2.center_angle, omega2.half_width
    R = geometry.arc_length(c2)
    margin = 6.1 * sigma / R
    if margin >= h2:
        raise ValueError("probes of this width do not fit in omega_2")
    centers = c2 + (h2 - margin) * np.cos(math.pi * (np.arange(n_probes) + 0.5) / n_probes)
    nodes = _chebyshev_nodes(omega1.center_angle, omega1.half_width, n_nodes)
    responses = np.empty((n_probes, n_nodes))
    for i, c in enumerate(centers):
        g = projected_bump(O, op.n_modes, np.array([c]), _TRUNCATION * sigma)
        src = g.spectral_multiply(lambda lam: lam) if branch == "neumann" else g
        responses[i] = op.apply_modes(src)(nodes[:, None])
    return PatchData(geometry, op.s, branch, (omega1.center_angle, omega1.half_width), (c2, h2),
                     centers, sigma, nodes, responses)


def _x_rows(data: PatchData, x: float, orders, degree: int) -> np.ndarray:
    """Rows r_p with r_p @ u ~ ((-Delta)^p u)(x) for samples u on the omega_1 nodes."""
    c1, h1 = data.omega1
    zeta = (data.nodes - c1) / h1
    pinv = np.linalg.pinv(cheb.chebvander(zeta, degree))
    ginv = data.geometry.inverse_metric(x)
    rows = []
    for p in orders:
        k = 2 * p
        dvec = np.array([cheb.chebval((x - c1) / h1, cheb.chebder(np.eye(degree + 1)[j], k) if k else np.eye(degree + 1)[j])
                         for j in range(degree + 1)]) / h1**k
        rows.append((-ginv) ** p * (dvec @ pinv))
    return np.array(rows)


def _z_row(data: PatchData, z: float, degree: int):
    """Row w with w @ (int K(., zeta) g_i dzeta)_i ~ K(z) for K a polynomial of the given degree on omega_2."""
    c2, h2 = data.omega2
    nodes, weights = data._omega2_rule()
    T = cheb.chebvander((nodes - c2) / h2, degree - 1)
    G = np.stack([data.probe(i)(nodes) for i in range(data.n_probes)]) @ (T * weights[:, None])
    ez = cheb.chebvander(np.array([(z - c2) / h2]), degree - 1)[0]
    return ez @ np.linalg.pinv(G), float(np.linalg.cond(G))


def _kernel_values(data: PatchData, x: float, z: float, orders, fit_degree: int, poly_degree: int):
    X = _x_rows(data, x, orders, fit_degree)
    zrow, cond = _z_row(data, z, poly_degree)
    return (zrow @ data.responses) @ X.T, cond


@dataclass(frozen=True, eq=False)
class RecoveredTaylor:
    """Recovered Taylor coefficients with their diagnostics.

    ``table`` holds a_0..a_m (Neumann) or c_0..c_l (Dirichlet). On the Neumann
    branch a_0 is not seen by mean-zero probes; it is estimated from the heat
    kernel rebuilt out of a_1..a_m. ``normalized`` divides by the first entry
    measured directly (a_1 for Neumann, c_0 for Dirichlet).
    """

    table: CoefficientTable
    raw: np.ndarray
    errors: np.ndarray
    normalized: np.ndarray
    gram_condition: float
    design_condition: float
    resolved: np.ndarray
    audit_clean: bool


def _check_pair(data: PatchData, x: float, z: float):
    (c1, h1), (c2, h2) = data.omega1, data.omega2
    if _angle_gap(x, c1) > h1 or _angle_gap(z, c2) > h2:
        raise ValueError("x must lie in omega_1 and z in omega_2")


def _coefficients(data, x, z, m_max, fit_degree, poly_degree):
    s = data.s
    if data.branch == "neumann":
        orders = range(m_max)  # Q_{p+1} = (-Delta_x)^p of the data
        q, cond = _kernel_values(data, x, z, orders, fit_degree, poly_degree)
        return np.array([math.gamma(s - p - 1) * q[p] for p in orders]), q, cond
    orders = range(m_max + 1)
    q, cond = _kernel_values(data, x, z, orders, fit_degree, poly_degree)
    factor = np.array([(-1.0) ** p * math.gamma(-s - p) / (4.0**p * math.factorial(p)) for p in orders])
    return factor * q, q, cond


def recover_taylor_coefficients(data: PatchData, m_max: int, x: float, z: float, *, fit_degree: int = 16,
                                poly_degree: int = 8) -> RecoveredTaylor:
    """Taylor coefficients of the Poisson kernel at (x, z) from patch data.

    Neumann branch: a_m = Gamma(s - m) Q_m(x, z) for 1 <= m <= m_max.
    Dirichlet branch: c_l = (-1)^l Gamma(-s - l) / (4^l l!) D_l(x, z) for l <= m_max.

    The error of each entry is the largest change under a lower or higher fit
    degree in x and a richer polynomial model in z. Entries whose error exceeds
    half their size are marked unresolved.
    """
    if not 1 <= m_max <= MAX_ORDER:
        raise ValueError(f"m_max must lie in [1, {MAX_ORDER}]")
    _check_pair(data, x, z)
    gram_cond = data.gram_condition
    if gram_cond > ILL_CONDITIONED:
        raise np.linalg.LinAlgError(f"probe Gram matrix is ill-conditioned (cond {gram_cond:.3g})")
    values, raw, cond = _coefficients(data, x, z, m_max, fit_degree, poly_degree)
    alternatives = [
        _coefficients(data, x, z, m_max, fit_degree - 4, poly_degree)[0],
        _coefficients(data, x, z, m_max, fit_degree + 4, poly_degree)[0],
        _coefficients(data, x, z, m_max, fit_degree, poly_degree + 2)[0],
    ]
    errors = np.max([np.abs(a - values) for a in alternatives], axis=0)
    resolved = errors <= 0.5 * np.abs(values)
    s = data.s
    if data.branch == "neumann":
        full = np.concatenate([[math.nan], values])
        full_err = np.concatenate([[math.nan], errors])
        a0, a0_err, limit = _zeroth(full, full_err, s, alternatives)
        full[0], full_err[0] = a0, a0_err
        singular = math.gamma(1.0 - s) * limit / s
        table = CoefficientTable("neumann", s, (x,), (z,), full, singular=singular, errors=full_err)
        normalized = _normalize(full, full[1])
        resolved = np.concatenate([[a0_err <= 0.5 * abs(a0)], resolved])
    else:
        table = CoefficientTable("dirichlet", s, (x,), (z,), values, errors=errors)
        normalized = _normalize(values, values[0])
    return RecoveredTaylor(table, raw, table.errors, normalized, gram_cond, cond, resolved, data.geometry.clean)


def _normalize(values, by):
    # zero data give a zero table rather than 0/0
    return values / by if by != 0.0 else np.zeros_like(values)


def _zeroth(full, full_err, s, alternatives):
    """a_0, its error and the large-t limit of K_t from the derivative-route reconstruction.

    The error covers the alternative fits, shifting every coefficient by its
    error bar, and a 20% change of the Laguerre scale.
    """
    def estimate(values, beta=None):
        tab = CoefficientTable("neumann", s, (0.0,), (0.0,), values, errors=full_err)
        rec = heat_from_taylor(tab, [1.0], route="derivative", beta=beta)
        return zeroth_from_derivative_route(rec, s), rec

    a0, rec = estimate(full)
    trials = [np.concatenate([[math.nan], a]) for a in alternatives]
    trials += [full + sign * np.nan_to_num(full_err) for sign in (-1.0, 1.0)]
    others = [estimate(v)[0] for v in trials]
    others += [estimate(full, factor * rec.parameter)[0] for factor in (0.8, 1.2)]
    return a0, max(abs(o - a0) for o in others), rec.limit


@dataclass(frozen=True, eq=False)
class HeatReconstruction:
    """K_t(x, z) rebuilt from patch data, with its large-t limit and diagnostics."""

    t: np.ndarray
    values: np.ndarray
    limit: float
    tail: float
    spread: np.ndarray
    coefficients: RecoveredTaylor
    moments: MomentReconstruction
    audit_clean: bool

    @property
    def mean_zero(self) -> np.ndarray:
        return self.values - self.limit


def reconstruct_heat(data: PatchData, x: float, z: float, t_grid, *, m_max: int = 8, tail_time: float = 10.0,
                     **fit) -> HeatReconstruction:
    """Heat kernel at (x, z) on ``t_grid`` from Neumann patch data.

    Chain: recovered a_1..a_m -> moments of the t-derivative of K -> Laguerre
    reconstruction -> K_t. ``tail`` is K at ``tail_time`` minus the large-t
    limit, which vanishes for the exact kernel. ``spread`` is the largest change
    in K_t when the coefficients are replaced by those of the alternative fits.
    """
    if data.branch != "neumann":
        raise ValueError("the heat kernel is rebuilt from Neumann data")
    if m_max < 5:
        raise ValueError("heat reconstruction needs m_max >= 5")
    rt = recover_taylor_coefficients(data, m_max, x, z, **fit)
    t = np.asarray(t_grid, dtype=float)
    grid = np.concatenate([t.ravel(), [tail_time]])
    rec = heat_from_taylor(rt.table, grid, route="derivative")
    values = rec.values[:-1].reshape(t.shape)
    spread = np.zeros(t.shape)
    base = np.asarray(rt.table.values)
    for sign in (-1.0, 1.0):
        shifted = base + sign * np.nan_to_num(rt.errors)
        alt = heat_from_taylor(CoefficientTable("neumann", data.s, (x,), (z,), shifted, errors=rt.errors), grid,
                               route="derivative")
        spread = np.maximum(spread, np.abs(alt.values[:-1].reshape(t.shape) - values))
    return HeatReconstruction(t, values, rec.limit, float(rec.values[-1] - rec.limit), spread, rt, rec,
                              data.geometry.clean)


@dataclass(frozen=True, eq=False)
class WaveReconstruction:
    """Smoothed wave pairing W(tau) = (sin(sqrt(tau) sqrt(-Delta))/sqrt(-Delta) f)(x), tau the squared time.

    ``mode0_constant`` is c in the constant-mode part c sqrt(tau); the rest is
    ``oscillatory``.
    """

    tau: np.ndarray
    values: np.ndarray
    mode0_constant: float
    distance: float
    moments: np.ndarray
    errors: np.ndarray
    reconstruction: MomentReconstruction
    audit_clean: bool

    @property
    def mode0(self) -> np.ndarray:
        return self.mode0_constant * np.sqrt(self.tau)

    @property
    def oscillatory(self) -> np.ndarray:
        return self.values - self.mode0


def reconstruct_wave(data: PatchData, x: float, weights, tau_grid, *, order: int = 6, fit_degree: int = 16
                     ) -> WaveReconstruction:
    """Smoothed wave kernel applied to f = sum_i weights[i] g_i, at x, from Dirichlet patch data.

    D_l = ((-Delta)^(s+l) f)(x) comes straight from the x-derivatives of the
    weighted responses (no deconvolution in z is needed). Since f lives in
    omega_2, W vanishes for sqrt(tau) below dist(x, omega_2), and
    ``transforms.wave_from_fractional_moments`` inverts the resulting
    Hausdorff moment problem.
    """
    if data.branch != "dirichlet":
        raise ValueError("the wave kernel is rebuilt from Dirichlet data")
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"order must lie in [1, {MAX_ORDER}]")
    c1, h1 = data.omega1
    if _angle_gap(x, c1) > h1:
        raise ValueError("x must lie in omega_1")
    w = np.asarray(weights, dtype=float)
    if w.shape != (data.n_probes,):
        raise ValueError("one weight per probe is needed")
    tau = np.asarray(tau_grid, dtype=float)
    combined = w @ data.responses
    orders = range(order + 1)
    D = _x_rows(data, x, orders, fit_degree) @ combined
    alts = [_x_rows(data, x, orders, fit_degree + d) @ combined for d in (-4, 4)]
    errors = np.max([np.abs(a - D) for a in alts], axis=0)
    c2, h2 = data.omega2
    distance = (_angle_gap(x, c2) - h2) * data.geometry.arc_length(x)
    if not np.any(D):
        rec = MomentReconstruction(np.zeros_like(tau), np.zeros(order + 1), 1.0, 0.0, 0.0, limit=0.0)
        return WaveReconstruction(tau, np.zeros_like(tau), 0.0, distance, D, errors, rec, data.geometry.clean)
    noise = np.maximum(errors / np.maximum(np.abs(D), 1e-300), 1e-13)
    rec = wave_from_fractional_moments(D, data.s, tau, distance, noise=noise)
    return WaveReconstruction(tau, rec.values, rec.limit, distance, D, errors, rec, data.geometry.clean)


def write_report(path, entries: dict) -> None:
    """Flat ``key = value`` report, written atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-")
    with os.fdopen(fd, "w", newline="\n") as fh:
        for key, value in entries.items():
            if isinstance(value, float):
                value = repr(value)
            elif isinstance(value, np.ndarray):
                value = " ".join(repr(float(v)) for v in value.ravel())
            fh.write(f"{key} = {value}\n")
    os.replace(tmp, path)
