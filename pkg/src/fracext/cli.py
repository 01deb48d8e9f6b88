"""Batch runner: ``fracext run --config <path> [--suite NAME] [--out DIR] [--cache DIR] [--seed N]``.

The config is a flat ``key = value`` file. Every suite appends check records
to ``report.csv`` (check, anchor, value, reference, tolerance, status) and
writes its tables and SVG plots next to it. The exit status is 0 only if
every check passes; config errors exit with 2 and name the offending key.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import extension, kernels, recon, sts, transforms
from .spectra import Arc, Circle, FlatTorus2, ModeFunction, Sphere2

__all__ = ["ConfigError", "ExperimentConfig", "CheckRecord", "ExperimentReport", "parse_config", "run", "main"]

SUITES = ("kernels", "transforms", "extension", "sts", "recon")

_DEFAULTS = {
    "manifold": "circle",
    "radius": "1.0",
    "metric": "1 0 2",
    "s": "0.5",
    "cutoff": "64",
    "suite": "all",
    "out": "fracext-out",
    "cache": "",
    "seed": "0",
    "pairs": "6",
    "tol_ratio": "1e-6",
    "tol_taylor": "1e-6",
    "tol_heat": "0.05",
    "tol_energy": "1e-4",
    "tol_bridge": "1e-7",
    "tol_recon": "0.10",
}


class ConfigError(ValueError):
    """A config value is missing, unknown or out of range; ``key`` names it."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: str
    radius: float
    metric: tuple
    s: float
    cutoff: int
    suite: str
    out: str
    cache: str
    seed: int
    pairs: int
    tolerances: dict = field(default_factory=dict)

    def build_manifold(self):
        if self.manifold == "circle":
            return Circle(self.radius)
        if self.manifold == "torus":
            a11, a12, a22 = self.metric
            return FlatTorus2(np.array([[a11, a12], [a12, a22]]))
        return Sphere2(self.radius)

    def fingerprint(self, *extra) -> str:
        """Hash of everything a cached table depends on."""
        text = repr((self.manifold, self.radius, self.metric, self.s, self.cutoff, self.seed, self.pairs) + extra)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _number(key, text, kind=float):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(key, f"cannot read {text!r} as {kind.__name__}") from None


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat config; ``overrides`` (from the command line) win over the file."""
    raw = dict(_DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(key, "unknown key")
        raw[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = str(value)

    manifold = raw["manifold"].lower()
    if manifold not in ("circle", "torus", "sphere"):
        raise ConfigError("manifold", "must be circle, torus or sphere")
    radius = _number("radius", raw["radius"])
    if not radius > 0:
        raise ConfigError("radius", "must be positive")
    metric = tuple(_number("metric", v) for v in raw["metric"].split())
    if len(metric) != 3:
        raise ConfigError("metric", "needs three numbers a11 a12 a22")
    if manifold == "torus" and not (metric[0] > 0 and metric[0] * metric[2] - metric[1] ** 2 > 0):
        raise ConfigError("metric", "must be positive definite")
    s = _number("s", raw["s"])
    if not 0.0 < s < 1.0:
        raise ConfigError("s", f"must lie strictly between 0 and 1, got {s}")
    cutoff = _number("cutoff", raw["cutoff"], int)
    if cutoff < 16:
        raise ConfigError("cutoff", "must be at least 16")
    suite = raw["suite"]
    if suite not in SUITES + ("all",):
        raise ConfigError("suite", f"must be one of {', '.join(SUITES + ('all',))}")
    seed = _number("seed", raw["seed"], int)
    pairs = _number("pairs", raw["pairs"], int)
    if pairs < 2:
        raise ConfigError("pairs", "need at least two point pairs")
    tolerances = {}
    for key in _DEFAULTS:
        if key.startswith("tol_"):
            tol = _number(key, raw[key])
            if not tol > 0:
                raise ConfigError(key, "must be positive")
            tolerances[key[4:]] = tol
    return ExperimentConfig(manifold, radius, metric, s, cutoff, suite, raw["out"], raw["cache"], seed, pairs,
                            tolerances)


@dataclass(frozen=True)
class CheckRecord:
    check: str
    anchor: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"


@dataclass
class ExperimentReport:
    records: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    def add(self, check, anchor, value, reference, tolerance, passed=None):
        value, reference = float(value), float(reference)
        if passed is None:
            passed = bool(abs(value - reference) <= tolerance)
        self.records.append(CheckRecord(check, anchor, value, reference, float(tolerance), bool(passed)))

    def below(self, check, anchor, value, tolerance):
        """A record for 'value <= tolerance' (reference 0)."""
        self.add(check, anchor, value, 0.0, tolerance, bool(np.isfinite(value) and value <= tolerance))

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "anchor", "value", "reference", "tolerance", "status"])
        for r in self.records:
            w.writerow([r.check, r.anchor, repr(r.value), repr(r.reference), repr(r.tolerance), r.status])
        return buf.getvalue()


def _atomic_write(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _spread(values) -> float:
    v = np.asarray(values, dtype=float)
    return float((v.max() - v.min()) / abs(v.mean()))


# -- cached tables ---------------------------------------------------------

class TableCache:
    """CSV tables keyed by name, each carrying the hash of the inputs that produced it."""

    def __init__(self, directory: str | None):
        self.directory = directory
        self.hits = 0
        self.stale = 0
        if directory:
            os.makedirs(directory, exist_ok=True)

    def _path(self, name):
        return os.path.join(self.directory, f"{name}.csv")

    def load(self, name: str, digest: str):
        if not self.directory or not os.path.exists(self._path(name)):
            return None
        with open(self._path(name)) as fh:
            first = fh.readline().strip()
            if first != f"# hash={digest}":
                self.stale += 1
                return None
            rows = list(csv.reader(fh))
        self.hits += 1
        return np.array([[float(v) for v in row] for row in rows[1:]])

    def store(self, name: str, digest: str, header, rows) -> None:
        if not self.directory:
            return
        buf = io.StringIO()
        buf.write(f"# hash={digest}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
        _atomic_write(self._path(name), buf.getvalue())


# -- SVG plots -------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def write_svg(path: str, title: str, series, *, xlabel: str = "", ylabel: str = "", logy: bool = False) -> None:
    """Line plot of ``series`` = [(label, x, y), ...] as a standalone SVG."""
    W, H, pad = 640, 400, 60
    xs = np.concatenate([np.asarray(x, dtype=float) for _, x, _ in series])
    ys = [np.asarray(y, dtype=float) for _, _, y in series]
    if logy:
        ys = [np.log10(np.maximum(np.abs(y), 1e-300)) for y in ys]
    yall = np.concatenate(ys)
    yall = yall[np.isfinite(yall)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(yall.min()), float(yall.max())) if yall.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (W - 2 * pad)

    def py(v):
        return H - pad - (v - y0) / (y1 - y0) * (H - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="14">{title}</text>',
           f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 15}" text-anchor="middle">{xlabel}</text>',
           f'<text x="15" y="{H / 2}" text-anchor="middle" transform="rotate(-90 15 {H / 2})">'
           f'{("log10 " if logy else "") + ylabel}</text>',
           f'<text x="{pad}" y="{H - pad + 15}" text-anchor="middle">{x0:.3g}</text>',
           f'<text x="{W - pad}" y="{H - pad + 15}" text-anchor="middle">{x1:.3g}</text>',
           f'<text x="{pad - 5}" y="{H - pad}" text-anchor="end">{y0:.3g}</text>',
           f'<text x="{pad - 5}" y="{pad + 4}" text-anchor="end">{y1:.3g}</text>']
    for i, ((label, x, _), y) in enumerate(zip(series, ys)):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(np.asarray(x, dtype=float), y) if np.isfinite(b))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{W - pad - 5}" y="{pad + 16 * (i + 1)}" text-anchor="end" fill="{color}">{label}</text>')
    out.append("</svg>\n")
    _atomic_write(path, "\n".join(out))


# -- suites ----------------------------------------------------------------

def _pairs(m, rng, n, min_dist=0.3, max_dist=None):
    """n random point pairs with min_dist <= d(x, z) (<= max_dist)."""
    X, Z = [], []
    while len(X) < n:
        x, z = m.sample(rng, 1), m.sample(rng, 1)
        d = float(np.min(m.distance(x[0] if m.ndim_coords > 1 else x[0, 0], z[0] if m.ndim_coords > 1 else z[0, 0])))
        if d >= min_dist and (max_dist is None or d <= max_dist):
            X.append(x[0])
            Z.append(z[0])
    return np.array(X), np.array(Z)


def _distance(m, x, z) -> float:
    return float(np.min(m.distance(x if m.ndim_coords > 1 else x[0], z if m.ndim_coords > 1 else z[0])))


def suite_kernels(cfg, m, report, out, cache, rng):
    s = cfg.s
    tol = cfg.tolerances["ratio"]
    X, Z = _pairs(m, rng, cfg.pairs)
    ys = np.array([0.1, 0.3, 0.5, 1.0, 2.0])
    digest = cfg.fingerprint("poisson", tuple(ys))
    table = cache.load("poisson_from_heat", digest)
    if table is None:
        rows = []
        for i in range(len(X)):
            for y in ys:
                rows.append([i, y, kernels.neumann_poisson_from_heat(m, s, y, X[i:i + 1], Z[i:i + 1]),
                             kernels.dirichlet_poisson_from_heat(m, s, y, X[i:i + 1], Z[i:i + 1])])
        table = np.array(rows)
        cache.store("poisson_from_heat", digest, ["pair", "y", "neumann", "dirichlet"], table)
    eig_n, eig_d = [], []
    for i, y in zip(table[:, 0].astype(int), table[:, 1]):
        eig_n.append(kernels.neumann_poisson_eigen(m, s, y, X[i:i + 1], Z[i:i + 1])[0])
        eig_d.append(kernels.dirichlet_poisson_eigen(m, s, y, X[i:i + 1], Z[i:i + 1])[0])
    rn = table[:, 2] / np.array(eig_n)
    rd = table[:, 3] / np.array(eig_d)
    report.below("neumann_poisson_ratio_spread", "poisson-heat identity", _spread(rn), tol)
    report.below("dirichlet_poisson_ratio_spread", "poisson-heat identity", _spread(rd), tol)
    report.constants["neumann_heat_ratio"] = (float(rn.mean()), kernels.neumann_heat_ratio(s))
    report.constants["dirichlet_heat_ratio"] = (float(rd.mean()), kernels.dirichlet_heat_ratio(s))
    report.below("neumann_ratio_vs_constant", "poisson-heat identity",
                 abs(rn.mean() / kernels.neumann_heat_ratio(s) - 1.0), tol)
    report.below("dirichlet_ratio_vs_constant", "poisson-heat identity",
                 abs(rd.mean() / kernels.dirichlet_heat_ratio(s) - 1.0), tol)

    # semigroup and mass
    x, z = X[:1], Z[:1]
    nodes, weights = m.quadrature_grid(2, min_resolution=m.resolution(cfg.cutoff))
    t1, t2 = 0.3, 0.5
    k1 = kernels.heat(m, t1, np.repeat(x, len(nodes), axis=0), nodes)
    k2 = kernels.heat(m, t2, nodes, np.repeat(z, len(nodes), axis=0))
    direct = kernels.heat(m, t1 + t2, x, z)[0]
    report.below("heat_semigroup", "heat semigroup", abs(weights @ (k1 * k2) - direct) / abs(direct), 1e-8)
    report.below("heat_mass", "heat semigroup", abs(weights @ k1 - 1.0), 1e-9)

    ts = np.linspace(0.05, 2.0, 60)
    curves = [(f"pair {i}", ts, [kernels.heat(m, t, X[i:i + 1], Z[i:i + 1])[0] for t in ts]) for i in range(min(3, len(X)))]
    write_svg(os.path.join(out, "heat_slices.svg"), "heat kernel slices", curves, xlabel="t", ylabel="K_t(x,z)")
    kernels.write_kernel_table(os.path.join(out, "heat_table.csv"), kernels.KernelEvaluator(m, "heat"), [0.1, 0.5, 1.0],
                               X, Z)
    kernels.write_kernel_table(os.path.join(out, "neumann_poisson_table.csv"),
                               kernels.KernelEvaluator(m, "neumann", s=s), list(ys), X, Z)


def suite_transforms(cfg, m, report, out, cache, rng):
    s = cfg.s
    X, Z = _pairs(m, rng, 1, min_dist=0.5, max_dist=1.5)
    x, z = X[:1], Z[:1]
    d = _distance(m, X[0], Z[0])
    J = 25
    tab = transforms.neumann_taylor_coeffs(m, s, x, z, J)
    y = 0.1 * d
    direct = kernels.neumann_poisson_from_heat(m, s, y, x, z) / kernels.neumann_heat_ratio(s)
    err = abs(tab.series(y) / kernels.neumann_heat_ratio(s) - direct) / abs(direct)
    report.below("taylor_series_J25", "taylor expansion at y=0", err, cfg.tolerances["taylor"])
    transforms.write_coefficient_tables(os.path.join(out, "taylor_coefficients.csv"), [tab])
    write_svg(os.path.join(out, "coefficient_decay.svg"), "scaled Taylor coefficients",
              [("|a_j| / (4^j j!)", np.arange(J + 1), tab.scaled())], xlabel="j", logy=True)

    # heat from moments, d = pi/2 on a circle (or the sampled pair elsewhere)
    if isinstance(m, Circle):
        x, z = np.array([[0.0]]), np.array([[math.pi / 2 * 1.0]])
    tab20 = transforms.neumann_taylor_coeffs(m, s, x, z, 20)
    tg = np.linspace(0.5, 2.0, 31)
    rec = transforms.heat_from_taylor(tab20, tg)
    truth = np.array([kernels.heat(m, t, x, z)[0] for t in tg])
    rel = float(np.linalg.norm(rec.values - truth) / np.linalg.norm(truth))
    report.below("heat_from_moments_J20", "heat-poisson equivalence", rel, cfg.tolerances["heat"])
    write_svg(os.path.join(out, "heat_from_moments.svg"), "heat kernel from moments",
              [("truth", tg, truth), ("reconstruction", tg, rec.values)], xlabel="t")

    # Kannai forward: per-mode ratio constancy and the constant mode
    n = 9
    ratios = []
    for yv in (0.5, 1.0, 2.0):
        f = ModeFunction(m, np.ones(n))
        fwd = transforms.kannai_forward(m, s, yv, f).coeffs
        prof = kernels.dirichlet_profile(s, np.sqrt(m.eigenvalues(n)) * yv)
        ratios.extend(fwd / prof)
    report.below("kannai_forward_ratio_spread", "kannai transform", _spread(ratios), cfg.tolerances["ratio"])
    report.constants["kannai_constant"] = (float(np.mean(ratios)), transforms.kannai_constant(s))

    # Kannai inverse on one eigenvalue
    lam = 1.0  # the inversion sees only the eigenvalue, so one fixed mode serves every manifold
    tau = np.linspace(0.2, 4.0, 60)
    M = transforms.dirichlet_derivative_moments(s, lam, 20)
    W = transforms.kannai_inverse(M, s, tau).values
    exact = np.sin(np.sqrt(tau * lam)) / math.sqrt(lam)
    report.below("kannai_inverse_single_mode", "kannai inversion",
                 float(np.linalg.norm(W - exact) / np.linalg.norm(exact)), 0.05)


def suite_extension(cfg, m, report, out, cache, rng):
    s = cfg.s
    n = min(cfg.cutoff, 16)
    data = np.zeros(n)
    data[1], data[4] = 1.0, 1.0
    for kind in ("neumann", "dirichlet"):
        field_ = extension.ExtensionField(m, s, kind, ModeFunction(m, data))
        for comp in ("tangential", "normal"):
            e = extension.energy_norm(field_, comp)
            report.below(f"energy_{kind}_{comp}", "energy estimates", e.discrepancy, cfg.tolerances["energy"])
    # integrated extension: ratio value_k lambda_k^(1-s) / f_k constant over k
    coeffs = np.zeros(11)
    coeffs[1:] = 1.0
    fd = extension.ExtensionField(m, s, "dirichlet", ModeFunction(m, coeffs))
    vals = extension.integrated_extension_modes(fd).coeffs[1:]
    lam = m.eigenvalues(11)[1:]
    ratio = vals * lam ** (1.0 - s)
    report.below("integrated_extension_ratio_spread", "conjugate extension", _spread(ratio),
                 cfg.tolerances["bridge"])
    report.constants["integrated_constant"] = (float(ratio.mean()), extension.integrated_constant(s))
    # mode ODE residual on [0.1, 5]
    y = np.linspace(0.2, 5.0, 49)
    h = 1e-3
    worst = 0.0
    for kind in ("neumann", "dirichlet"):
        f = extension.ExtensionField(m, s, kind, ModeFunction(m, np.r_[0.0, np.ones(6)]))
        c = [f.profiles(y + k * h) for k in (-2, -1, 0, 1, 2)]
        d2 = (-c[0] + 16 * c[1] - 30 * c[2] + 16 * c[3] - c[4]) / (12 * h * h)
        res = d2 + (1 - 2 * s) / y[:, None] * f.profile_derivatives(y) - f.eigenvalues * c[2]
        worst = max(worst, float(np.max(np.abs(res)) / np.max(np.abs(f.eigenvalues * c[2]))))
    report.below("mode_ode_residual", "extension equation", worst, 1e-6)
    nodes = m.quadrature_grid(0, min_resolution=8)[0]
    extension.write_extension_slice(os.path.join(out, "extension_slice.csv"),
                                    extension.ExtensionField(m, s, "dirichlet", ModeFunction(m, data)), nodes,
                                    [0.1, 0.5, 1.0])


def _circle_setup(cfg, m):
    if not isinstance(m, Circle):
        raise ConfigError("manifold", "the sts and recon suites need manifold = circle")
    R = m.radius
    return Arc(m, 0.0, math.pi / 2), R


def suite_sts(cfg, m, report, out, cache, rng):
    s = cfg.s
    O, _ = _circle_setup(cfg, m)
    n = max(cfg.cutoff, 401)
    f = sts.mean_zero_bump(O, n)
    h = sts.mean_zero_bump(O, n, center=np.array([0.4]), radius=0.9 * m.radius)
    N = sts.StsOperator(m, O, "frac_neumann", s, n_modes=n)
    D = sts.StsOperator(m, O, "frac_dirichlet", s, n_modes=n)
    rt = N.apply_modes(D.apply_modes(f), check=False)
    report.below("round_trip", "source-to-solution maps", float(np.max(np.abs(rt.coeffs - f.coeffs)) / f.l2_norm()),
                 1e-9)
    sa = abs(N.pairing(f, h) - N.pairing(h, f)) / abs(N.pairing(f, h))
    report.below("self_adjoint", "source-to-solution maps", sa, 1e-8)
    report.below("commutator", "source-to-solution maps", sts.commutator_norm(N, 96), 1e-10)
    br = sts.bridge_to_local(m, s, O, f)
    ratios = br.mode_ratios()
    report.below("bridge_ratio_spread", "nonlocal-to-local bridge", _spread(ratios), cfg.tolerances["bridge"])
    report.constants["bridge_ratio"] = (float(ratios.mean()), kernels.weighted_derivative_constant(s))
    u = sts.recover_u_from_vbar(m, s, br.vbar)
    uf = N.apply_modes(f)
    report.below("recover_u_from_vbar", "nonlocal-to-local bridge",
                 float(np.max(np.abs(u.coeffs - uf.coeffs)) / uf.l2_norm()), 1e-8)
    centers = [np.array([c]) for c in np.linspace(-0.8, 0.8, 5)]
    sts.write_operator_matrix(os.path.join(out, "frac_neumann_matrix.csv"), N, centers, 0.6 * m.radius)


def suite_recon(cfg, m, report, out, cache, rng):
    s = cfg.s
    O, R = _circle_setup(cfg, m)
    x, z = -math.pi / 4, math.pi / 4
    op = sts.StsOperator(m, O, "frac_neumann", s, n_modes=801)
    data = recon.measure_patch_data(op, Arc(m, x, 0.65), Arc(m, z, 0.5))
    tg = np.linspace(0.5, 2.0, 31)
    hr = recon.reconstruct_heat(data, x, z, tg)
    truth = np.array([kernels.heat(m, t, [x], [z])[0] for t in tg])
    rel = float(np.max(np.abs(hr.values - truth) / np.abs(truth)))
    report.below("recon_heat_max_rel", "patch reconstruction", rel, cfg.tolerances["recon"])
    report.below("recon_heat_tail", "patch reconstruction", abs(hr.tail), 1e-3)
    report.add("recon_audit", "patch reconstruction", float(hr.audit_clean), 1.0, 0.0)
    tab = transforms.neumann_taylor_coeffs(m, s, [x], [z], 5)
    norm = hr.coefficients.normalized[1:6]
    ref = tab.values[1:6] / tab.values[1]
    report.below("recon_normalized_coefficients", "patch reconstruction",
                 float(np.max(np.abs(norm / ref - 1.0))), 0.01)
    write_svg(os.path.join(out, "recon_heat.svg"), "patch reconstruction of the heat kernel",
              [("truth", tg, truth), ("reconstruction", tg, hr.values)], xlabel="t")
    recon.write_report(os.path.join(out, "recon_report.txt"), {
        "s": s, "x": x, "z": z, "omega1": "-0.785398 0.65", "omega2": "0.785398 0.5",
        "n_probes": data.n_probes, "sigma": data.sigma,
        "gram_condition": hr.coefficients.gram_condition,
        "design_condition": hr.coefficients.design_condition,
        "coefficients": np.asarray(hr.coefficients.table.values),
        "coefficient_errors": np.asarray(hr.coefficients.errors),
        "heat_max_rel_error": rel, "heat_tail": hr.tail, "heat_limit": hr.limit,
        "audit_clean": hr.audit_clean,
    })


_SUITE_FUNCS = {
    "kernels": suite_kernels,
    "transforms": suite_transforms,
    "extension": suite_extension,
    "sts": suite_sts,
    "recon": suite_recon,
}


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the configured suite(s); write report.csv, constants.csv, tables and plots to ``cfg.out``."""
    os.makedirs(cfg.out, exist_ok=True)
    cache_dir = os.environ.get("FRACEXT_CACHE") or cfg.cache or os.path.join(cfg.out, "cache")
    cache = TableCache(cache_dir)
    m = cfg.build_manifold()
    report = ExperimentReport()
    names = SUITES if cfg.suite == "all" else (cfg.suite,)
    for name in names:
        rng = np.random.default_rng([cfg.seed, SUITES.index(name)])
        try:
            _SUITE_FUNCS[name](cfg, m, report, cfg.out, cache, rng)
        except ConfigError:
            raise
        except Exception as exc:  # a crashed suite is a failed check, not a crashed run
            report.add(f"{name}_completed", "plumbing", 0.0, 1.0, 0.0, passed=False)
            print(f"suite {name} failed: {exc!r}", file=sys.stderr)
    _atomic_write(os.path.join(cfg.out, "report.csv"), report.csv_text())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["constant", "fitted", "reference"])
    for key, (fitted, ref) in report.constants.items():
        w.writerow([key, repr(fitted), repr(float(ref))])
    _atomic_write(os.path.join(cfg.out, "constants.csv"), buf.getvalue())
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fracext")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a verification suite")
    p.add_argument("--config", required=True)
    p.add_argument("--suite")
    p.add_argument("--out")
    p.add_argument("--cache")
    p.add_argument("--seed", type=int)
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text, {"suite": args.suite, "out": args.out, "cache": args.cache, "seed": args.seed})
        report = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for r in report.records:
        print(f"{r.status:4s}  {r.check}  value={r.value:.3g}  tol={r.tolerance:.3g}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
