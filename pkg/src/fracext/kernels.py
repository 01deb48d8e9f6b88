"""Two-point kernels on the model manifolds.

Four kernels are provided, each as a truncated eigen-expansion:

* heat            K_t(x, z)   = sum_k exp(-lambda_k t) phi_k(x) phi_k(z)
* wave            K^w_tau     = sum_k sin(tau sqrt(lambda_k)) / sqrt(lambda_k) phi_k(x) phi_k(z)
* Neumann Poisson P_y(x, z)   = sum_{k >= 1} lambda_k^(-s) psi_s(sqrt(lambda_k) y) phi_k(x) phi_k(z)
* Dirichlet Poisson P^D_y     = sum_{k >= 0} psi_s(sqrt(lambda_k) y) phi_k(x) phi_k(z)

with the profile psi_s(r) = 2^(1-s) / Gamma(s) r^s K_s(r), psi_s(0+) = 1. The
Poisson kernels are pinned by their traces: the Dirichlet one reproduces f at
y = 0, the Neumann one reproduces (-Delta)^(-s) f on mean-zero f.

The two Poisson kernels are also available through heat-kernel integrals in t.
Their ratios to the eigen-sums are the constants ``neumann_heat_ratio(s)`` and
``dirichlet_heat_ratio(s)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .specfun import bessel_k_scaled, gamma, integrate_halfline
from .spectra import Circle, FlatTorus2, SpectralManifold

__all__ = [
    "dirichlet_profile",
    "neumann_profile",
    "weighted_derivative_constant",
    "heat",
    "heat_in_time",
    "wave",
    "neumann_poisson_eigen",
    "dirichlet_poisson_eigen",
    "neumann_poisson_from_heat",
    "dirichlet_poisson_from_heat",
    "neumann_heat_ratio",
    "dirichlet_heat_ratio",
    "poisson_cutoff",
    "KernelEvaluator",
    "write_kernel_table",
]

# the last kept mode has exp(-lambda t) (or exp(-sqrt(lambda) y)) below this
_TAIL_EXPONENT_MARGIN = 6.0


def dirichlet_profile(s: float, r) -> np.ndarray:
    """psi_s(r) = 2^(1-s)/Gamma(s) r^s K_s(r); psi_s(0) = 1, decays like e^(-r)."""
    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    tiny = (r > 0) & (r < 1e-100)
    # 1 - Gamma(1-s)/Gamma(1+s) (r/2)^(2s) + O(r^2); exact in doubles this close to 0
    out[tiny] = 1.0 - gamma(1.0 - s) / gamma(1.0 + s) * (0.5 * r[tiny]) ** (2.0 * s)
    pos = r >= 1e-100
    if np.any(pos):
        rp = r[pos]
        # r^s K_s(r) = exp(s log r - r) * (e^r K_s(r)) avoids overflow/underflow in between
        with np.errstate(under="ignore"):
            out[pos] = (2.0 ** (1.0 - s) / gamma(s)) * np.exp(s * np.log(rp) - rp) * bessel_k_scaled(s, rp)
    return out


def neumann_profile(s: float, lam, y) -> np.ndarray:
    """lambda^(-s) psi_s(sqrt(lambda) y) for lambda > 0, and 0 on the constant mode."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros(np.broadcast(lam, np.asarray(y)).shape)
    pos = np.broadcast_to(lam > 0, out.shape)
    lam_b = np.broadcast_to(lam, out.shape)
    y_b = np.broadcast_to(np.asarray(y, dtype=float), out.shape)
    out[pos] = lam_b[pos] ** (-s) * dirichlet_profile(s, np.sqrt(lam_b[pos]) * y_b[pos])
    return out


def weighted_derivative_constant(s: float) -> float:
    """d_s with y^(1-2s) d/dy psi_s(sqrt(lambda) y) -> -d_s lambda^s as y -> 0."""
    return 2.0 ** (1.0 - 2.0 * s) * gamma(1.0 - s) / gamma(s)


def neumann_heat_ratio(s: float) -> float:
    """neumann_poisson_from_heat / neumann_poisson_eigen."""
    return gamma(s)


def dirichlet_heat_ratio(s: float) -> float:
    """dirichlet_poisson_from_heat / dirichlet_poisson_eigen."""
    return 4.0**s * gamma(s)


def _check_order(s: float):
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")


def _sup_phi_squared(m: SpectralManifold) -> float:
    if isinstance(m, Circle):
        return 1.0 / (math.pi * m.radius)
    if isinstance(m, FlatTorus2):
        return 2.0 / m.volume
    # per eigenspace the addition theorem gives (2l+1)/(4 pi R^2); the caller adds the shell factor
    return 1.0 / (4.0 * math.pi * m.radius**2)


def _heat_lambda_cutoff(m: SpectralManifold, t: float, rel_tol: float) -> float:
    """Eigenvalue cutoff so that the discarded heat modes sum to below rel_tol / volume."""
    target = -math.log(rel_tol) + _TAIL_EXPONENT_MARGIN
    lam = target / t
    for _ in range(4):
        n = m.mode_count(lam) if not isinstance(m, FlatTorus2) else max(1.0, m.volume * lam / (4.0 * math.pi))
        lam = (target + math.log(max(1.0, n * _sup_phi_squared(m) * m.volume * (1.0 + 1.0 / (lam * t))))) / t
    return lam


def _image_heat(m: SpectralManifold, t: float, x, z, rel_tol: float) -> np.ndarray:
    """Method of images on the flat manifolds."""
    target = -math.log(rel_tol) + _TAIL_EXPONENT_MARGIN
    reach = math.sqrt(4.0 * t * target)
    if isinstance(m, Circle):
        d = np.mod((m.as_points(x) - m.as_points(z))[:, 0] + math.pi, 2.0 * math.pi) - math.pi
        n = math.ceil(reach / (2.0 * math.pi * m.radius)) + 1
        shifts = 2.0 * math.pi * np.arange(-n, n + 1)
        arg = m.radius * (d[:, None] + shifts[None, :])
        return np.exp(-(arg**2) / (4.0 * t)).sum(axis=1) / math.sqrt(4.0 * math.pi * t)
    d = m.as_points(x) - m.as_points(z)
    d = d - np.round(d)
    mu = float(np.linalg.eigvalsh(m.metric)[0])
    n = math.ceil(reach / math.sqrt(mu)) + 1
    g = np.arange(-n, n + 1, dtype=float)
    shifts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    v = d[:, None, :] + shifts[None, :, :]
    q = np.einsum("pni,ij,pnj->pn", v, m.metric, v)
    return np.exp(-q / (4.0 * t)).sum(axis=1) / (4.0 * math.pi * t)


def _image_count(m: SpectralManifold, t: float, rel_tol: float) -> float:
    reach = math.sqrt(4.0 * t * (-math.log(rel_tol) + _TAIL_EXPONENT_MARGIN))
    if isinstance(m, Circle):
        return 2.0 * (reach / (2.0 * math.pi * m.radius) + 1.0)
    if isinstance(m, FlatTorus2):
        mu = float(np.linalg.eigvalsh(m.metric)[0])
        return (2.0 * (reach / math.sqrt(mu) + 1.0)) ** 2
    return math.inf


def heat(m: SpectralManifold, t: float, x, z, *, rel_tol: float = 1e-12, method: str = "auto",
         include_zero: bool = True) -> np.ndarray:
    """Heat kernel K_t(x, z) for paired point arrays.

    Args:
        method: ``"eigen"`` (spectral sum, the sphere uses its addition
            theorem), ``"images"`` (flat manifolds only) or ``"auto"``, which picks
            the cheaper of the two.
        include_zero: if False the constant mode is dropped, giving K_t - 1/volume.
    """
    if not t > 0:
        raise ValueError(f"heat kernel needs t > 0, got {t}")
    lam_max = _heat_lambda_cutoff(m, t, rel_tol)
    if method == "auto":
        flat = isinstance(m, (Circle, FlatTorus2))
        n_eigen = m.mode_count(lam_max) if not isinstance(m, FlatTorus2) else m.volume * lam_max / (4.0 * math.pi)
        method = "images" if flat and _image_count(m, t, rel_tol) < n_eigen else "eigen"
        if not include_zero and t * float(m.eigenvalues(2)[1]) > 1.0:
            method = "eigen"  # images would lose the mean-zero part against 1/vol
    if method == "images":
        if not isinstance(m, (Circle, FlatTorus2)):
            raise ValueError("the method of images is only available on flat manifolds")
        value = _image_heat(m, t, x, z, rel_tol)
        return value if include_zero else value - 1.0 / m.volume
    if method != "eigen":
        raise ValueError(f"unknown heat kernel method {method!r}")
    if include_zero:
        mult = lambda lam: np.exp(-lam * t)  # noqa: E731
    else:
        # relative accuracy of the mean-zero part needs the cutoff measured from lambda_1
        lam_max += float(m.eigenvalues(2)[1])
        mult = lambda lam: np.where(lam > 0, np.exp(-lam * t), 0.0)  # noqa: E731
    return m.spectral_sum(mult, x, z, lam_max)


def heat_in_time(m: SpectralManifold, x, z, *, rel_tol: float = 1e-12,
                 include_zero: bool = True) -> Callable[[np.ndarray], np.ndarray]:
    """t -> K_t(x, z) at one pair of points, vectorised over t.

    Eigen-sums share one pair spectrum, grown as smaller times are requested.
    Times where exp(-d^2/4t) < 1e-300 return 0 outright.
    """
    x = m.as_points(x)[:1]
    z = m.as_points(z)[:1]
    d = float(np.min(m.distance(x[0] if m.ndim_coords > 1 else x[0, 0], z[0] if m.ndim_coords > 1 else z[0, 0])))
    t_floor = d * d / (4.0 * 690.0)
    offset = 0.0 if include_zero else 1.0 / m.volume
    flat = isinstance(m, (Circle, FlatTorus2))
    cache = {"lam_max": -1.0, "lam": None, "w": None}

    lam1 = float(m.eigenvalues(2)[1])

    def use_images(t):
        if not flat:
            return False
        if not include_zero and lam1 * t > 1.0:
            # the image sum would lose the mean-zero part to cancellation against 1/vol
            return False
        lam_max = _heat_lambda_cutoff(m, t, rel_tol)
        n_eigen = m.volume * lam_max / (4.0 * math.pi) if isinstance(m, FlatTorus2) else m.mode_count(lam_max)
        return _image_count(m, t, rel_tol) < n_eigen

    def evaluate(t):
        flat_t = np.atleast_1d(t).ravel()
        out = np.full(flat_t.shape, -offset)
        noise = np.zeros(flat_t.shape)
        live = flat_t > t_floor
        images = np.array([live[i] and use_images(ti) for i, ti in enumerate(flat_t)], dtype=bool)
        for i in np.flatnonzero(images):
            value = _image_heat(m, float(flat_t[i]), x, z, rel_tol)[0]
            out[i] = value - offset
            noise[i] = 8.0 * np.finfo(float).eps * abs(value)
        eig = live & ~images
        if np.any(eig):
            lam_max = _heat_lambda_cutoff(m, float(np.min(flat_t[eig])), rel_tol) + (0.0 if include_zero else lam1)
            if lam_max > cache["lam_max"]:
                cache["lam"], cache["w"] = m.pair_spectrum(x, z, lam_max)
                cache["lam_max"] = lam_max
            lam, w = cache["lam"], cache["w"]
            if not include_zero:
                lam, w = lam[1:], w[1:]
            with np.errstate(under="ignore"):
                terms = np.exp(-np.outer(flat_t[eig], lam))
            vals = terms @ w
            # off the diagonal the sum cancels down to roundoff at small t; the
            # Gaussian bound says the true value is below that floor, so report 0
            floor = 64.0 * np.finfo(float).eps * (terms @ np.abs(w))
            if include_zero:
                vals = np.where(np.abs(vals) <= floor, 0.0, vals)
            else:
                # adding and removing 1/vol would round the mean-zero part to ulps of 1/vol
                vals = np.where(np.abs(vals + offset) <= floor, -offset, vals)
            out[eig] = vals
            noise[eig] = floor
        return out.reshape(np.shape(t)), noise.reshape(np.shape(t))

    last = {"key": None, "result": None}

    def cached(t):
        t = np.asarray(t, dtype=float)
        key = (t.shape, t.tobytes())
        if key != last["key"]:
            last["key"], last["result"] = key, evaluate(t)
        return last["result"]

    def k(t):
        return cached(t)[0]

    # absolute rounding noise of k(t), for quadratures that should not refine below it
    k.noise = lambda t: cached(t)[1]
    return k


def wave(m: SpectralManifold, tau: float, x, z, n_modes: int) -> np.ndarray:
    """Wave kernel sin(tau sqrt(-Delta))/sqrt(-Delta) truncated at mode ``n_modes`` (whole shells).

    The pointwise series does not converge; the cutoff acts as a smoothing and
    is the caller's responsibility.
    """
    if tau < 0:
        raise ValueError("wave kernel needs tau >= 0")
    return m.spectral_sum(lambda lam: wave_multiplier(tau, lam), x, z, m.shell_cutoff(n_modes))


def wave_multiplier(tau: float, lam) -> np.ndarray:
    """sin(tau sqrt(lam)) / sqrt(lam), equal to tau at lam = 0."""
    lam = np.asarray(lam, dtype=float)
    w = np.sqrt(lam)
    out = np.full(lam.shape, float(tau))
    pos = w > 0
    out[pos] = np.sin(tau * w[pos]) / w[pos]
    return out


def poisson_cutoff(y: float, rel_tol: float = 1e-12) -> float:
    """Eigenvalue cutoff where exp(-sqrt(lambda) y) has dropped below rel_tol."""
    return ((-math.log(rel_tol) + _TAIL_EXPONENT_MARGIN) / y) ** 2


def _poisson_lam_max(m, y, n_modes, rel_tol, max_modes):
    if n_modes is not None:
        return m.shell_cutoff(n_modes)
    lam_max = poisson_cutoff(y, rel_tol)
    count = m.volume * lam_max / (4.0 * math.pi) if isinstance(m, FlatTorus2) else m.mode_count(lam_max)
    if count > max_modes:
        raise ValueError(
            f"y = {y:g} needs about {count:.3g} modes for rel_tol {rel_tol:g}; pass n_modes explicitly"
        )
    return lam_max


def neumann_poisson_eigen(m: SpectralManifold, s: float, y: float, x, z, *, n_modes: int | None = None,
                          rel_tol: float = 1e-12, max_modes: int = 400_000) -> np.ndarray:
    """Neumann Poisson kernel by its eigen-expansion (constant mode excluded)."""
    _check_order(s)
    if not y > 0:
        raise ValueError("the eigen-sum Poisson kernel needs y > 0; use the Taylor series at y = 0")
    lam_max = _poisson_lam_max(m, y, n_modes, rel_tol, max_modes)
    return m.spectral_sum(lambda lam: neumann_profile(s, lam, y), x, z, lam_max)


def dirichlet_poisson_eigen(m: SpectralManifold, s: float, y: float, x, z, *, n_modes: int | None = None,
                            rel_tol: float = 1e-12, max_modes: int = 400_000) -> np.ndarray:
    """Dirichlet Poisson kernel by its eigen-expansion (constant mode included, profile 1)."""
    _check_order(s)
    if not y > 0:
        raise ValueError("the eigen-sum Poisson kernel needs y > 0")
    lam_max = _poisson_lam_max(m, y, n_modes, rel_tol, max_modes)
    return m.spectral_sum(lambda lam: dirichlet_profile(s, np.sqrt(lam) * y), x, z, lam_max)


def _single_pair(m: SpectralManifold, x, z):
    x, z = m.as_points(x), m.as_points(z)
    if x.shape[0] != 1 or z.shape[0] != 1:
        raise ValueError("heat-transform kernels are evaluated one pair at a time")
    d = float(np.min(m.distance(x[0] if m.ndim_coords > 1 else x[0, 0], z[0] if m.ndim_coords > 1 else z[0, 0])))
    if d <= 0:
        raise ValueError("heat-transform Poisson kernels need x != z")
    return x, z


def neumann_poisson_from_heat(m: SpectralManifold, s: float, y: float, x, z, *,
                              rel_tol: float = 1e-11) -> float:
    """int_0^inf (K_t(x,z) - 1/vol) exp(-y^2/4t) t^(s-1) dt, for y >= 0 and x != z.

    The constant mode is removed so that the integral converges at t = inf.
    """
    _check_order(s)
    if y < 0:
        raise ValueError("y must be nonnegative")
    x, z = _single_pair(m, x, z)
    k = heat_in_time(m, x, z, include_zero=False, rel_tol=rel_tol * 1e-2)

    def f(t):
        return k(t) * np.exp(-(y * y) / (4.0 * t)) * t ** (s - 1.0)

    return integrate_halfline(f, rel_tol)


def dirichlet_poisson_from_heat(m: SpectralManifold, s: float, y: float, x, z, *,
                                rel_tol: float = 1e-11) -> float:
    """y^(2s) int_0^inf K_t(x,z) exp(-y^2/4t) t^(-1-s) dt for y > 0, x != z (full heat kernel)."""
    _check_order(s)
    if not y > 0:
        raise ValueError("y must be positive")
    x, z = _single_pair(m, x, z)
    k = heat_in_time(m, x, z, rel_tol=rel_tol * 1e-2)

    def f(t):
        return k(t) * np.exp(-(y * y) / (4.0 * t)) * t ** (-1.0 - s)

    return y ** (2.0 * s) * integrate_halfline(f, rel_tol)


_KINDS = ("heat", "wave", "neumann", "dirichlet")


@dataclass(frozen=True)
class KernelEvaluator:
    """A two-point kernel with fixed kind, representation and truncation controls.

    Calling it with (parameter, x, z) evaluates the kernel pairwise, where the
    parameter is t (heat), tau (wave) or y (Poisson kernels).
    """

    manifold: SpectralManifold
    kind: str
    s: float | None = None
    representation: str = "eigen"
    n_modes: int | None = None
    rel_tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.representation not in ("eigen", "heat_transform"):
            raise ValueError("representation must be 'eigen' or 'heat_transform'")
        if self.kind in ("neumann", "dirichlet"):
            _check_order(self.s)
        elif self.representation != "eigen":
            raise ValueError(f"{self.kind} kernels only have an eigen representation")
        if self.kind == "wave" and self.n_modes is None:
            raise ValueError("the wave kernel needs an explicit n_modes cutoff")

    @property
    def includes_zero_mode(self) -> bool:
        return self.kind != "neumann"

    def __call__(self, param: float, x, z) -> np.ndarray:
        m = self.manifold
        if self.kind == "heat":
            return heat(m, param, x, z, rel_tol=self.rel_tol)
        if self.kind == "wave":
            return wave(m, param, x, z, self.n_modes)
        if self.representation == "eigen":
            fn = neumann_poisson_eigen if self.kind == "neumann" else dirichlet_poisson_eigen
            return fn(m, self.s, param, x, z, n_modes=self.n_modes, rel_tol=self.rel_tol)
        fn = neumann_poisson_from_heat if self.kind == "neumann" else dirichlet_poisson_from_heat
        xs, zs = m.as_points(x), m.as_points(z)
        n = max(xs.shape[0], zs.shape[0])
        xs, zs = np.broadcast_to(xs, (n, m.ndim_coords)), np.broadcast_to(zs, (n, m.ndim_coords))
        return np.array([fn(m, self.s, param, xs[i:i + 1], zs[i:i + 1], rel_tol=max(self.rel_tol, 1e-11))
                         for i in range(n)])


def write_kernel_table(path, evaluator: KernelEvaluator, params, x, z) -> None:
    """Write kernel values on every (parameter, pair) as CSV.

    Columns: x0[, x1], z0[, z1], the parameter name, value.
    """
    m = evaluator.manifold
    xs, zs = m.as_points(x), m.as_points(z)
    pname = {"heat": "t", "wave": "tau"}.get(evaluator.kind, "y")
    header = [f"x{i}" for i in range(m.ndim_coords)] + [f"z{i}" for i in range(m.ndim_coords)] + [pname, "value"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in params:
            values = evaluator(p, xs, zs)
            for i in range(values.shape[0]):
                row = list(xs[min(i, xs.shape[0] - 1)]) + list(zs[min(i, zs.shape[0] - 1)]) + [p, values[i]]
                w.writerow([repr(float(v)) for v in row])
