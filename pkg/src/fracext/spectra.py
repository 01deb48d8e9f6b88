"""Closed model manifolds with explicit eigen-decompositions.

Three manifolds are available, all with exact eigenpairs of the (negative)
Laplace-Beltrami operator:

* ``Circle(radius)``: points are angles theta, modes 1, cos(m theta), sin(m theta).
* ``FlatTorus2(A)``: the unit cell [0, 1)^2 with constant metric g = A,
  modes cos / sin(2 pi k.x) for lattice vectors k.
* ``Sphere2(radius)``: points are (polar, azimuth), modes are real spherical
  harmonics.

Mode index 0 is always the constant 1 / sqrt(volume). Eigenvalues are
nondecreasing in the mode index and the ordering is fixed, so tables computed
against an index are reproducible.

Points are passed as arrays whose last axis holds the coordinates
(``ndim_coords`` of them). The circle also accepts bare angle arrays.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SpectralManifold",
    "Circle",
    "FlatTorus2",
    "Sphere2",
    "ModeFunction",
    "Subset",
    "Arc",
    "Rectangle",
    "Cap",
    "eigenpair",
    "geodesic_distance",
    "project",
    "QuadratureStall",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_TWO_PI = 2.0 * math.pi


class QuadratureStall(RuntimeError):
    """Raised when grid doubling on a manifold stops converging."""


def _composite_gl(a: float, b: float, panels: int):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


class SpectralManifold(abc.ABC):
    """A closed manifold given by an explicit eigenbasis of -Delta_g."""

    dim: int
    ndim_coords: int

    @property
    @abc.abstractmethod
    def volume(self) -> float: ...

    @abc.abstractmethod
    def eigenvalues(self, n_modes: int) -> np.ndarray:
        """First ``n_modes`` eigenvalues in mode order."""

    @abc.abstractmethod
    def basis(self, points, n_modes: int) -> np.ndarray:
        """Matrix of phi_k(points), shape (n_points, n_modes)."""

    @abc.abstractmethod
    def distance(self, x, z) -> np.ndarray:
        """Geodesic distance, broadcasting over leading axes."""

    @abc.abstractmethod
    def quadrature_grid(self, level: int, min_resolution: int = 0):
        """Nodes and weights of a product rule; ``level`` doubles the panel count."""

    @abc.abstractmethod
    def mode_count(self, lam_max: float) -> int:
        """Number of modes with eigenvalue <= lam_max."""

    @abc.abstractmethod
    def resolution(self, n_modes: int) -> int:
        """Largest angular frequency present in the first ``n_modes`` modes."""

    @abc.abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Random points, roughly uniform in the coordinates."""

    @abc.abstractmethod
    def inverse_metric(self, points) -> np.ndarray:
        """g^{ij} in the coordinates, shape (n_points, ndim_coords, ndim_coords)."""

    def as_points(self, x) -> np.ndarray:
        """Return ``x`` as an array of shape (n, ndim_coords)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or (self.ndim_coords > 1 and x.ndim == 1):
            x = x.reshape(1, -1)
        return x.reshape(-1, self.ndim_coords)

    def eigenvalue(self, k: int) -> float:
        return float(self.eigenvalues(k + 1)[k])

    def eigenfunction(self, k: int) -> Callable[[np.ndarray], np.ndarray]:
        def phi(points):
            return self.basis(points, k + 1)[:, k]

        return phi

    def shell_cutoff(self, n_modes: int) -> float:
        """Eigenvalue of mode ``n_modes - 1``; truncating at it keeps whole eigenspaces."""
        return float(self.eigenvalues(n_modes)[-1]) * (1.0 + 1e-12)

    def spectral_sum(self, multiplier, x, z, lam_max: float) -> np.ndarray:
        """sum over lambda_k <= lam_max of multiplier(lambda_k) phi_k(x) phi_k(z), pairwise.

        ``x`` and ``z`` are point arrays of equal length (or one of them a single
        point). Subclasses use addition theorems; this default goes through the basis.
        """
        n = self.mode_count(lam_max)
        lam = self.eigenvalues(n)
        bx, bz = self.basis(x, n), self.basis(z, n)
        return np.sum(bx * bz * multiplier(lam), axis=1)

    def pair_spectrum(self, x, z, lam_max: float):
        """Eigenvalues and weights w with sum_k g(lambda_k) phi_k(x) phi_k(z) = w @ g(lam), one pair."""
        n = self.mode_count(lam_max)
        return self.eigenvalues(n), self.basis(x, n)[0] * self.basis(z, n)[0]

    def spectral_matrix(self, multiplier, X, Z, lam_max: float) -> np.ndarray:
        """Matrix [sum_k multiplier(lambda_k) phi_k(X_i) phi_k(Z_j)]_{ij}."""
        n = self.mode_count(lam_max)
        lam = self.eigenvalues(n)
        return (self.basis(X, n) * multiplier(lam)) @ self.basis(Z, n).T

    def integrate(self, f, rel_tol: float = 1e-10, max_level: int = 8) -> float:
        """Integrate a vectorised function over M by composite Gauss-Legendre with doubling."""
        previous = None
        for level in range(max_level + 1):
            nodes, weights = self.quadrature_grid(level)
            value = float(weights @ np.asarray(f(nodes), dtype=float))
            if previous is not None and abs(value - previous) <= rel_tol * max(1.0, abs(value)):
                return value
            previous = value
        raise QuadratureStall(f"manifold quadrature did not settle after {max_level} doublings")


@dataclass(frozen=True)
class Circle(SpectralManifold):
    """Circle of circumference 2 pi R, parametrised by angle."""

    radius: float = 1.0
    dim: int = field(default=1, init=False)
    ndim_coords: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def volume(self) -> float:
        return _TWO_PI * self.radius

    @staticmethod
    def _frequency(k: np.ndarray) -> np.ndarray:
        return (k + 1) // 2

    def eigenvalues(self, n_modes: int) -> np.ndarray:
        m = self._frequency(np.arange(n_modes))
        return m.astype(float) ** 2 / self.radius**2

    def basis(self, points, n_modes: int) -> np.ndarray:
        theta = self.as_points(points)[:, 0]
        out = np.empty((theta.size, n_modes))
        out[:, 0] = 1.0 / math.sqrt(self.volume)
        norm = 1.0 / math.sqrt(math.pi * self.radius)
        m_max = (n_modes) // 2
        if m_max:
            arg = np.outer(theta, np.arange(1, m_max + 1))
            c, s = np.cos(arg) * norm, np.sin(arg) * norm
            out[:, 1::2] = c[:, : out[:, 1::2].shape[1]]
            out[:, 2::2] = s[:, : out[:, 2::2].shape[1]]
        return out

    def distance(self, x, z):
        d = np.abs(np.mod(np.asarray(x, dtype=float) - np.asarray(z, dtype=float), _TWO_PI))
        return self.radius * np.minimum(d, _TWO_PI - d)

    def quadrature_grid(self, level: int, min_resolution: int = 0):
        panels = max(2, math.ceil(min_resolution / 2)) * 2**level
        nodes, weights = _composite_gl(0.0, _TWO_PI, panels)
        return nodes[:, None], weights * self.radius

    def inverse_metric(self, points):
        n = self.as_points(points).shape[0]
        return np.full((n, 1, 1), 1.0 / self.radius**2)

    def mode_count(self, lam_max: float) -> int:
        if lam_max < 0:
            return 0
        return 1 + 2 * math.floor(self.radius * math.sqrt(lam_max) + 1e-12)

    def resolution(self, n_modes: int) -> int:
        return int(self._frequency(np.asarray(n_modes - 1)))

    def sample(self, rng, n):
        return rng.uniform(0.0, _TWO_PI, size=(n, 1))

    def pair_spectrum(self, x, z, lam_max):
        d = float((self.as_points(x) - self.as_points(z))[0, 0])
        m = np.arange(0, math.floor(self.radius * math.sqrt(max(lam_max, 0.0)) + 1e-12) + 1)
        w = np.cos(m * d) / (math.pi * self.radius)
        w[0] = 1.0 / self.volume
        return m.astype(float) ** 2 / self.radius**2, w

    def spectral_sum(self, multiplier, x, z, lam_max):
        d = (self.as_points(x) - self.as_points(z))[:, 0]
        m = np.arange(1, math.floor(self.radius * math.sqrt(max(lam_max, 0.0)) + 1e-12) + 1)
        g0 = float(np.asarray(multiplier(np.zeros(1)))[0])
        out = np.full(d.shape, g0 / self.volume)
        if m.size:
            g = np.asarray(multiplier(m.astype(float) ** 2 / self.radius**2), dtype=float)
            out += np.cos(np.outer(d, m)) @ g / (math.pi * self.radius)
        return out


@dataclass(frozen=True, eq=False)
class FlatTorus2(SpectralManifold):
    """R^2 / Z^2 with the constant metric g = A (A symmetric positive definite)."""

    metric: np.ndarray = field(default_factory=lambda: np.eye(2))
    dim: int = field(default=2, init=False)
    ndim_coords: int = field(default=2, init=False)

    def __post_init__(self):
        A = np.array(self.metric, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T):
            raise ValueError("metric must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(A)[0] <= 0:
            raise ValueError("metric must be positive definite")
        A.setflags(write=False)
        object.__setattr__(self, "metric", A)
        object.__setattr__(self, "_inv", np.linalg.inv(A))
        object.__setattr__(self, "_volume", math.sqrt(float(np.linalg.det(A))))
        object.__setattr__(self, "_table", [np.zeros((1, 2), dtype=int), np.zeros(1)])

    def __eq__(self, other):
        return isinstance(other, FlatTorus2) and np.array_equal(self.metric, other.metric)

    def __hash__(self):
        return hash(("FlatTorus2", self.metric.tobytes()))

    @property
    def volume(self) -> float:
        return self._volume

    def inverse_metric(self, points):
        n = self.as_points(points).shape[0]
        return np.broadcast_to(self._inv, (n, 2, 2)).copy()

    def _lattice_eigenvalue(self, k: np.ndarray) -> np.ndarray:
        return 4.0 * math.pi**2 * np.einsum("...i,ij,...j->...", k, self._inv, k)

    def _representatives(self, lam_max: float):
        """Half-lattice vectors (k1 > 0, or k1 = 0 and k2 > 0) with eigenvalue <= lam_max, sorted."""
        mu_min = np.linalg.eigvalsh(self._inv)[0]
        r = math.isqrt(int(lam_max / (4.0 * math.pi**2 * mu_min))) + 1
        k1, k2 = np.meshgrid(np.arange(0, r + 1), np.arange(-r, r + 1), indexing="ij")
        k = np.stack([k1.ravel(), k2.ravel()], axis=1)
        k = k[(k[:, 0] > 0) | ((k[:, 0] == 0) & (k[:, 1] > 0))]
        lam = self._lattice_eigenvalue(k.astype(float))
        keep = lam <= lam_max * (1 + 1e-12)
        k, lam = k[keep], lam[keep]
        # ties in lambda are resolved lexicographically; rounding makes the order float-stable
        order = np.lexsort((k[:, 1], k[:, 0], np.round(lam / max(lam_max, 1.0), 12)))
        return k[order], lam[order]

    def _modes(self, n_modes: int):
        vectors, lam = self._table
        if vectors.shape[0] < n_modes:
            lam_max = 4.0 * math.pi**2 * max(1.0, float(np.max(np.diag(self._inv)))) * 4.0
            while True:
                k, l = self._representatives(lam_max)
                if 1 + 2 * k.shape[0] >= n_modes:
                    break
                lam_max *= 2.0
            vectors = np.vstack([np.zeros((1, 2), dtype=int), np.repeat(k, 2, axis=0)])
            lam = np.concatenate([[0.0], np.repeat(l, 2)])
            # truncate to complete eigenvalue shells strictly below lam_max
            self._table[:] = [vectors, lam]
        return vectors[:n_modes], lam[:n_modes]

    def lattice_vectors(self, n_modes: int) -> np.ndarray:
        """Lattice vector of each mode (the cos/sin pair shares one vector)."""
        return self._modes(n_modes)[0]

    def eigenvalues(self, n_modes: int) -> np.ndarray:
        return self._modes(n_modes)[1].copy()

    def basis(self, points, n_modes: int) -> np.ndarray:
        x = self.as_points(points)
        k, _ = self._modes(n_modes)
        arg = _TWO_PI * x @ k[1:].T.astype(float)
        out = np.empty((x.shape[0], n_modes))
        out[:, 0] = 1.0 / math.sqrt(self.volume)
        norm = math.sqrt(2.0 / self.volume)
        # odd mode indices are cosines, even ones sines
        out[:, 1::2] = norm * np.cos(arg[:, 0::2])
        out[:, 2::2] = norm * np.sin(arg[:, 1::2])
        return out

    def distance(self, x, z):
        d = np.asarray(x, dtype=float) - np.asarray(z, dtype=float)
        d = d - np.round(d)
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
        v = d[..., None, :] + shifts
        q = np.einsum("...i,ij,...j->...", v, self.metric, v)
        return np.sqrt(np.min(q, axis=-1))

    def quadrature_grid(self, level: int, min_resolution: int = 0):
        panels = max(2, math.ceil(min_resolution / 2)) * 2**level
        t, w = _composite_gl(0.0, 1.0, panels)
        X, Y = np.meshgrid(t, t, indexing="ij")
        W = np.outer(w, w) * self.volume
        return np.stack([X.ravel(), Y.ravel()], axis=1), W.ravel()

    def mode_count(self, lam_max: float) -> int:
        if lam_max < 0:
            return 0
        return 1 + 2 * self._representatives(lam_max)[0].shape[0]

    def resolution(self, n_modes: int) -> int:
        k, _ = self._modes(n_modes)
        return int(np.max(np.abs(k))) if n_modes else 0

    def sample(self, rng, n):
        return rng.uniform(0.0, 1.0, size=(n, 2))

    def pair_spectrum(self, x, z, lam_max):
        d = (self.as_points(x) - self.as_points(z))[0]
        k, lam = self._representatives(lam_max)
        w = np.cos(_TWO_PI * k.astype(float) @ d) * (2.0 / self.volume)
        return np.concatenate([[0.0], lam]), np.concatenate([[1.0 / self.volume], w])

    def spectral_sum(self, multiplier, x, z, lam_max):
        d = self.as_points(x) - self.as_points(z)
        k, lam = self._representatives(lam_max)
        g0 = float(np.asarray(multiplier(np.zeros(1)))[0])
        out = np.full(d.shape[0], g0 / self.volume)
        if k.shape[0]:
            g = np.asarray(multiplier(lam), dtype=float)
            out += np.cos(_TWO_PI * d @ k.T.astype(float)) @ g * (2.0 / self.volume)
        return out


def _normalised_legendre(lmax: int, x: np.ndarray) -> np.ndarray:
    """q[l, m] = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_l^m(x), no Condon-Shortley phase."""
    x = np.asarray(x, dtype=float)
    sin = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    q = np.zeros((lmax + 1, lmax + 1) + x.shape)
    q[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, lmax + 1):
        q[m, m] = math.sqrt((2 * m + 1) / (2 * m)) * sin * q[m - 1, m - 1]
    for m in range(0, lmax):
        q[m + 1, m] = math.sqrt(2 * m + 3) * x * q[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
            b = math.sqrt(((l - 1) ** 2 - m * m) / (4 * (l - 1) ** 2 - 1))
            q[l, m] = a * (x * q[l - 1, m] - b * q[l - 2, m])
    return q


@dataclass(frozen=True)
class Sphere2(SpectralManifold):
    """Round sphere of radius R; points are (polar angle, azimuth)."""

    radius: float = 1.0
    dim: int = field(default=2, init=False)
    ndim_coords: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def volume(self) -> float:
        return 4.0 * math.pi * self.radius**2

    @staticmethod
    def degree_order(k: int) -> tuple[int, int]:
        """Mode index -> (l, m), with m running from -l to l."""
        l = math.isqrt(k)
        return l, k - l * l - l

    def eigenvalues(self, n_modes: int) -> np.ndarray:
        l = np.floor(np.sqrt(np.arange(n_modes) + 0.5)).astype(int)
        return l * (l + 1.0) / self.radius**2

    def basis(self, points, n_modes: int) -> np.ndarray:
        p = self.as_points(points)
        theta, phi = p[:, 0], p[:, 1]
        lmax = self.degree_order(max(n_modes - 1, 0))[0]
        q = _normalised_legendre(lmax, np.cos(theta))
        out = np.empty((p.shape[0], n_modes))
        r2 = math.sqrt(2.0)
        for k in range(n_modes):
            l, m = self.degree_order(k)
            if m == 0:
                out[:, k] = q[l, 0]
            elif m > 0:
                out[:, k] = r2 * q[l, m] * np.cos(m * phi)
            else:
                out[:, k] = r2 * q[l, -m] * np.sin(-m * phi)
        return out / self.radius

    def inverse_metric(self, points):
        theta = self.as_points(points)[:, 0]
        out = np.zeros((theta.size, 2, 2))
        out[:, 0, 0] = 1.0 / self.radius**2
        out[:, 1, 1] = 1.0 / (self.radius * np.sin(theta)) ** 2
        return out

    def to_cartesian(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        th, ph = p[..., 0], p[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)

    def cos_angle(self, x, z):
        return np.clip(np.sum(self.to_cartesian(x) * self.to_cartesian(z), axis=-1), -1.0, 1.0)

    def distance(self, x, z):
        a, b = self.to_cartesian(x), self.to_cartesian(z)
        cross = np.linalg.norm(np.cross(a, b), axis=-1)
        return self.radius * np.arctan2(cross, np.sum(a * b, axis=-1))

    def quadrature_grid(self, level: int, min_resolution: int = 0):
        panels = max(2, math.ceil(min_resolution / 2)) * 2**level
        u, wu = _composite_gl(-1.0, 1.0, panels)
        ph, wph = _composite_gl(0.0, _TWO_PI, 2 * panels)
        U, PH = np.meshgrid(u, ph, indexing="ij")
        W = np.outer(wu, wph) * self.radius**2
        return np.stack([np.arccos(U.ravel()), PH.ravel()], axis=1), W.ravel()

    def mode_count(self, lam_max: float) -> int:
        if lam_max < 0:
            return 0
        x = lam_max * self.radius**2
        l = math.floor((-1.0 + math.sqrt(1.0 + 4.0 * x)) / 2.0 + 1e-12)
        return (l + 1) ** 2

    def resolution(self, n_modes: int) -> int:
        return self.degree_order(max(n_modes - 1, 0))[0]

    def sample(self, rng, n):
        return np.stack([np.arccos(rng.uniform(-1, 1, n)), rng.uniform(0, _TWO_PI, n)], axis=1)

    def pair_spectrum(self, x, z, lam_max):
        c = float(np.atleast_1d(self.cos_angle(self.as_points(x)[0], self.as_points(z)[0]))[0])
        x_max = max(lam_max, 0.0) * self.radius**2
        lmax = math.floor((-1.0 + math.sqrt(1.0 + 4.0 * x_max)) / 2.0 + 1e-12)
        p = np.empty(lmax + 1)
        p[0] = 1.0
        if lmax >= 1:
            p[1] = c
        for n in range(2, lmax + 1):
            p[n] = ((2 * n - 1) * c * p[n - 1] - (n - 1) * p[n - 2]) / n
        l = np.arange(lmax + 1)
        return l * (l + 1.0) / self.radius**2, p * (2 * l + 1) / (4.0 * math.pi * self.radius**2)

    def spectral_sum(self, multiplier, x, z, lam_max):
        # addition theorem: sum_m Y_lm(x) Y_lm(z) = (2l+1)/(4 pi R^2) P_l(cos gamma)
        c = np.atleast_1d(self.cos_angle(self.as_points(x), self.as_points(z)))
        x_max = max(lam_max, 0.0) * self.radius**2
        lmax = math.floor((-1.0 + math.sqrt(1.0 + 4.0 * x_max)) / 2.0 + 1e-12)
        l = np.arange(lmax + 1)
        g = np.asarray(multiplier(l * (l + 1.0) / self.radius**2), dtype=float)
        w = g * (2 * l + 1) / (4.0 * math.pi * self.radius**2)
        p_prev, p = np.ones_like(c), c
        out = w[0] * p_prev
        if lmax >= 1:
            out = out + w[1] * p
        for n in range(2, lmax + 1):
            p_prev, p = p, ((2 * n - 1) * c * p - (n - 1) * p_prev) / n
            out = out + w[n] * p
        return out


@dataclass(frozen=True, eq=False)
class ModeFunction:
    """A real function on M stored by its coefficients in the eigenbasis."""

    manifold: SpectralManifold
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def cutoff(self) -> int:
        return self.coeffs.size - 1

    @property
    def mean_zero(self) -> bool:
        return self.coeffs.size == 0 or self.coeffs[0] == 0.0

    def __call__(self, points) -> np.ndarray:
        return self.manifold.basis(points, self.coeffs.size) @ self.coeffs

    def without_mean(self) -> ModeFunction:
        c = self.coeffs.copy()
        if c.size:
            c[0] = 0.0
        return ModeFunction(self.manifold, c)

    def mean(self) -> float:
        return float(self.coeffs[0]) / math.sqrt(self.manifold.volume) if self.coeffs.size else 0.0

    def spectral_multiply(self, multiplier: Callable[[np.ndarray], np.ndarray]) -> ModeFunction:
        """Apply a spectral multiplier m(lambda_k) coefficientwise."""
        lam = self.manifold.eigenvalues(self.coeffs.size)
        return ModeFunction(self.manifold, multiplier(lam) * self.coeffs)

    def __add__(self, other: ModeFunction) -> ModeFunction:
        n = max(self.coeffs.size, other.coeffs.size)
        c = np.zeros(n)
        c[: self.coeffs.size] += self.coeffs
        c[: other.coeffs.size] += other.coeffs
        return ModeFunction(self.manifold, c)

    def __mul__(self, a: float) -> ModeFunction:
        return ModeFunction(self.manifold, a * self.coeffs)

    __rmul__ = __mul__

    def __sub__(self, other: ModeFunction) -> ModeFunction:
        return self + (-1.0) * other

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def eigenpair(m: SpectralManifold, k: int):
    """Return (lambda_k, phi_k) for mode index k >= 0."""
    if k < 0:
        raise ValueError("mode index must be nonnegative")
    return m.eigenvalue(k), m.eigenfunction(k)


def geodesic_distance(m: SpectralManifold, x, z):
    return m.distance(x, z)


def project(m: SpectralManifold, f, k_max: int, rel_tol: float = 1e-10, max_level: int = 7) -> ModeFunction:
    """Coefficients (f, phi_k) for k <= k_max, with grid doubling until they settle."""
    n = k_max + 1
    resolution = m.resolution(n)
    previous = None
    for level in range(max_level + 1):
        nodes, weights = m.quadrature_grid(level, min_resolution=resolution)
        values = np.asarray(f(nodes), dtype=float)
        coeffs = m.basis(nodes, n).T @ (weights * values)
        if previous is not None:
            scale = max(1.0, float(np.max(np.abs(coeffs))))
            if np.max(np.abs(coeffs - previous)) <= rel_tol * scale:
                return ModeFunction(m, coeffs)
        previous = coeffs
    raise QuadratureStall(f"projection did not settle after {max_level} doublings")


class Subset(abc.ABC):
    """An open subset of a model manifold with an exact parameter description."""

    manifold: SpectralManifold

    @abc.abstractmethod
    def contains(self, points) -> np.ndarray: ...

    @abc.abstractmethod
    def disjoint(self, other: Subset) -> bool: ...

    @abc.abstractmethod
    def quadrature_grid(self, n: int):
        """Nodes and weights of a rule on the subset with about n points per direction."""

    @abc.abstractmethod
    def center(self) -> np.ndarray: ...

    @abc.abstractmethod
    def inradius(self) -> float:
        """Radius of a geodesic ball around ``center()`` contained in the subset."""

    def measure(self) -> float:
        return float(np.sum(self.quadrature_grid(32)[1]))

    def bump(self, center=None, radius: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
        """Smooth compactly supported bump exp(-1/(1-r^2)) in geodesic distance."""
        c = self.center() if center is None else np.asarray(center, dtype=float)
        rho = 0.9 * self.inradius() if radius is None else radius
        m = self.manifold

        def b(points):
            r = np.asarray(m.distance(m.as_points(points), c)).reshape(-1) / rho
            out = np.zeros_like(r)
            inside = r < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
            return out

        return b

    def gaussian_bump(self, center=None, radius: float | None = None) -> Callable[[np.ndarray], np.ndarray]:
        """exp(-r^2 / (2 sigma^2)) with sigma = radius / 6.5, below 1e-9 beyond ``radius``.

        Unlike ``bump`` it is analytic, so its eigen-coefficients decay like a
        Gaussian and a modest mode cutoff reproduces it to 1e-9 everywhere.
        """
        c = self.center() if center is None else np.asarray(center, dtype=float)
        rho = 0.9 * self.inradius() if radius is None else radius
        sigma = rho / 6.5
        m = self.manifold

        def b(points):
            r = np.asarray(m.distance(m.as_points(points), c)).reshape(-1)
            return np.exp(-0.5 * (r / sigma) ** 2)

        return b


def _arc_gap(c1: float, c2: float) -> float:
    d = abs((c1 - c2) % _TWO_PI)
    return min(d, _TWO_PI - d)


@dataclass(frozen=True)
class Arc(Subset):
    """Open arc of angles (center - half_width, center + half_width) on a circle."""

    manifold: Circle
    center_angle: float
    half_width: float

    def __post_init__(self):
        if not 0 < self.half_width < math.pi:
            raise ValueError("half_width must lie in (0, pi)")

    def contains(self, points):
        theta = self.manifold.as_points(points)[:, 0]
        return np.array([_arc_gap(t, self.center_angle) < self.half_width for t in theta])

    def disjoint(self, other):
        if not isinstance(other, Arc):
            raise TypeError("can only compare arcs with arcs")
        return _arc_gap(self.center_angle, other.center_angle) >= self.half_width + other.half_width

    def quadrature_grid(self, n: int):
        t, w = _composite_gl(self.center_angle - self.half_width, self.center_angle + self.half_width, max(1, n // 16))
        return t[:, None], w * self.manifold.radius

    def center(self):
        return np.array([self.center_angle])

    def inradius(self):
        return self.half_width * self.manifold.radius


def _interval_disjoint(a0, a1, b0, b1) -> bool:
    """Disjointness of open intervals on R / Z."""
    ca, cb = 0.5 * (a0 + a1), 0.5 * (b0 + b1)
    d = abs((ca - cb) % 1.0)
    return min(d, 1.0 - d) >= 0.5 * (a1 - a0) + 0.5 * (b1 - b0)


@dataclass(frozen=True)
class Rectangle(Subset):
    """Open coordinate rectangle (x0, x1) x (y0, y1) in the unit cell of a flat torus."""

    manifold: FlatTorus2
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (0 < self.x1 - self.x0 < 1 and 0 < self.y1 - self.y0 < 1):
            raise ValueError("rectangle sides must have length in (0, 1)")

    def contains(self, points):
        p = self.manifold.as_points(points)
        inx = np.mod(p[:, 0] - self.x0, 1.0) < self.x1 - self.x0
        iny = np.mod(p[:, 1] - self.y0, 1.0) < self.y1 - self.y0
        return inx & iny & (np.mod(p[:, 0] - self.x0, 1.0) > 0) & (np.mod(p[:, 1] - self.y0, 1.0) > 0)

    def disjoint(self, other):
        if not isinstance(other, Rectangle):
            raise TypeError("can only compare rectangles with rectangles")
        return _interval_disjoint(self.x0, self.x1, other.x0, other.x1) or _interval_disjoint(
            self.y0, self.y1, other.y0, other.y1
        )

    def quadrature_grid(self, n: int):
        tx, wx = _composite_gl(self.x0, self.x1, max(1, n // 16))
        ty, wy = _composite_gl(self.y0, self.y1, max(1, n // 16))
        X, Y = np.meshgrid(tx, ty, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1), np.outer(wx, wy).ravel() * self.manifold.volume

    def center(self):
        return np.array([0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1)])

    def inradius(self):
        # smallest metric length of the half sides, shrunk for the skew of A
        A = self.manifold.metric
        hx, hy = 0.5 * (self.x1 - self.x0), 0.5 * (self.y1 - self.y0)
        mu = np.linalg.eigvalsh(A)[0]
        return math.sqrt(mu) * min(hx, hy)


@dataclass(frozen=True)
class Cap(Subset):
    """Open geodesic cap {x : d(x, center) < radius} on a sphere."""

    manifold: Sphere2
    center_point: tuple
    radius: float

    def __post_init__(self):
        if not 0 < self.radius < math.pi * self.manifold.radius:
            raise ValueError("cap radius must lie in (0, pi R)")

    def contains(self, points):
        return self.manifold.distance(self.manifold.as_points(points), np.asarray(self.center_point)) < self.radius

    def disjoint(self, other):
        if not isinstance(other, Cap):
            raise TypeError("can only compare caps with caps")
        gap = float(self.manifold.distance(np.asarray(self.center_point), np.asarray(other.center_point)))
        return gap >= self.radius + other.radius

    def quadrature_grid(self, n: int):
        # polar coordinates around the cap center, rotated back onto the sphere
        R = self.manifold.radius
        a, wa = _composite_gl(0.0, self.radius / R, max(1, n // 16))
        b, wb = _composite_gl(0.0, _TWO_PI, max(1, n // 8))
        A, B = np.meshgrid(a, b, indexing="ij")
        W = np.outer(wa * np.sin(a), wb) * R**2
        local = np.stack([np.sin(A) * np.cos(B), np.sin(A) * np.sin(B), np.cos(A)], axis=-1).reshape(-1, 3)
        e3 = self.manifold.to_cartesian(np.asarray(self.center_point))
        helper = np.array([1.0, 0.0, 0.0]) if abs(e3[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(helper, e3)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(e3, e1)
        xyz = local @ np.stack([e1, e2, e3])
        pts = np.stack([np.arccos(np.clip(xyz[:, 2], -1, 1)), np.mod(np.arctan2(xyz[:, 1], xyz[:, 0]), _TWO_PI)], axis=1)
        return pts, W.ravel()

    def center(self):
        return np.asarray(self.center_point, dtype=float)

    def inradius(self):
        return self.radius
