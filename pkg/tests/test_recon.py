import dataclasses
import math

import numpy as np
import pytest

from fracext import kernels, recon, sts, transforms
from fracext.spectra import Arc, Circle

C1 = Circle(1.0)
O = Arc(C1, 0.0, math.pi / 2)  # length pi
X, Z = -math.pi / 4, math.pi / 4
OMEGA1, OMEGA2 = Arc(C1, X, 0.65), Arc(C1, Z, 0.5)
S = 0.5
T_GRID = np.linspace(0.5, 2.0, 31)


@pytest.fixture(scope="module")
def neumann_data():
    return recon.measure_patch_data(sts.StsOperator(C1, O, "frac_neumann", S, n_modes=801), OMEGA1, OMEGA2)


@pytest.fixture(scope="module")
def dirichlet_data():
    return recon.measure_patch_data(sts.StsOperator(C1, O, "frac_dirichlet", S, n_modes=801), OMEGA1, OMEGA2)


@pytest.fixture(scope="module")
def heat_truth():
    return np.array([kernels.heat(C1, t, [X], [Z])[0] for t in T_GRID])


def test_geometry_handle_only_exposes_the_metric_on_o():
    g = recon.LocalGeometry(C1, O)
    assert g.inverse_metric(0.3) == pytest.approx(1.0)
    assert g.clean
    with pytest.raises(recon.AuditViolation):
        g.eigenvalues(5)
    with pytest.raises(recon.AuditViolation):
        g.inverse_metric(3.0)
    assert not g.clean and g.violations == ["eigenvalues", "inverse_metric outside O"]
    with pytest.raises(TypeError):
        recon.LocalGeometry(C1, object())


def test_patch_invariants(neumann_data):
    d = neumann_data
    assert d.gram_condition < 1e6
    with pytest.raises(ValueError):
        dataclasses.replace(d, omega2=(X + 0.7, 0.1))  # touches omega_1
    with pytest.raises(ValueError):
        dataclasses.replace(d, omega1=(-1.4, 0.3))  # leaves O
    with pytest.raises(ValueError):
        dataclasses.replace(d, branch="robin")
    with pytest.raises(ValueError):
        dataclasses.replace(d, responses=d.responses[:, :5])
    with pytest.raises(ValueError):
        recon.measure_patch_data(sts.StsOperator(C1, O, "local"), OMEGA1, OMEGA2)
    with pytest.raises(ValueError):
        recon.measure_patch_data(sts.StsOperator(C1, O, "frac_neumann", S), OMEGA1, Arc(C1, Z, 0.1))


def test_normalized_neumann_coefficients(neumann_data):
    rt = recon.recover_taylor_coefficients(neumann_data, 8, X, Z)
    ref = transforms.neumann_taylor_coeffs(C1, S, [X], [Z], 5).values
    assert np.allclose(rt.normalized[1:6], ref[1:6] / ref[1], rtol=0.01)
    assert rt.audit_clean and rt.resolved[1:6].all()
    assert np.all(rt.errors[1:] > 0)


def test_dirichlet_base_case(dirichlet_data):
    # c_0 is the Dirichlet Poisson kernel at y = 0 read off from the data
    rt = recon.recover_taylor_coefficients(dirichlet_data, 4, X, Z)
    ref = transforms.dirichlet_taylor_coeffs(C1, S, [X], [Z], 4).values
    assert rt.table.values[0] == pytest.approx(ref[0], rel=1e-5)
    assert np.allclose(rt.normalized[:4], ref[:4] / ref[0], rtol=0.01)


def test_zero_data_give_zero_coefficients(neumann_data, dirichlet_data):
    for d in (neumann_data, dirichlet_data):
        zero = dataclasses.replace(d, responses=np.zeros_like(d.responses))
        rt = recon.recover_taylor_coefficients(zero, 5, X, Z)
        assert not np.any(rt.table.values) and not np.any(rt.normalized)


def test_coefficient_validation(neumann_data):
    with pytest.raises(ValueError):
        recon.recover_taylor_coefficients(neumann_data, 9, X, Z)
    with pytest.raises(ValueError):
        recon.recover_taylor_coefficients(neumann_data, 4, Z, X)
    with pytest.raises(ValueError):
        recon.reconstruct_heat(neumann_data, X, Z, T_GRID, m_max=4)


def test_two_probe_bases_agree_within_their_errors(neumann_data):
    other = recon.measure_patch_data(sts.StsOperator(C1, O, "frac_neumann", S, n_modes=801), OMEGA1, OMEGA2,
                                     n_probes=10, sigma=0.035)
    a = recon.recover_taylor_coefficients(neumann_data, 6, X, Z)
    b = recon.recover_taylor_coefficients(other, 6, X, Z)
    bound = a.errors / abs(a.table.values[1]) + b.errors / abs(b.table.values[1])
    assert np.all(np.abs(a.normalized - b.normalized)[1:] <= bound[1:])


def test_heat_reconstruction(neumann_data, heat_truth):
    hr = recon.reconstruct_heat(neumann_data, X, Z, T_GRID)
    assert np.max(np.abs(hr.values / heat_truth - 1)) < 0.10
    assert abs(hr.tail) < 1e-3
    assert hr.audit_clean
    assert hr.limit == pytest.approx(1 / (2 * math.pi), rel=0.05)
    again = recon.reconstruct_heat(neumann_data, X, Z, T_GRID)
    assert np.array_equal(hr.values, again.values)
    with pytest.raises(ValueError):
        recon.reconstruct_heat(dataclasses.replace(neumann_data, branch="dirichlet"), X, Z, T_GRID)


@pytest.mark.xfail(strict=True, reason="unresolved high-order coefficients add noise, so m_max = 5 is slightly better "
                                       "than m_max = 8")
def test_error_does_not_improve_as_m_max_decreases(neumann_data, heat_truth):
    errs = [np.max(np.abs(recon.reconstruct_heat(neumann_data, X, Z, T_GRID, m_max=m).values / heat_truth - 1))
            for m in (8, 5)]
    assert errs[1] >= errs[0]


def _wave_truth(f, tau):
    # sin(sqrt(tau) sqrt(-Delta)) / sqrt(-Delta) f at X, and sqrt(tau) on the constant mode
    n = f.coeffs.size
    w = np.sqrt(C1.eigenvalues(n))
    b = C1.basis([X], n)[0] * f.coeffs
    t = np.sqrt(tau)[:, None]
    safe = np.where(w > 0, w, 1.0)
    return np.sum(np.where(w > 0, np.sin(t * w) / safe, t) * b, axis=1)


@pytest.fixture(scope="module")
def wave_setup(dirichlet_data):
    weights = np.zeros(dirichlet_data.n_probes)
    weights[5] = 1.0
    f = sts.projected_bump(O, 801, np.array([dirichlet_data.centers[5]]), 6.5 * dirichlet_data.sigma)
    tau = np.linspace(0.2, 3.0, 57)
    return weights, f, tau, _wave_truth(f, tau)


def test_wave_truth_is_the_wave_source_to_solution_map(wave_setup):
    # d/dt of the Duhamel solution for a = 1 is the wave kernel action
    _, f, tau, truth = wave_setup
    _, ut = sts.wave_sts_modes(f, lambda r: np.ones_like(r), math.sqrt(tau[-1]))
    assert ut([[X]])[0] == pytest.approx(truth[-1], rel=1e-8)


def test_wave_zero_data_and_mode0(dirichlet_data, wave_setup):
    weights, f, tau, _ = wave_setup
    zero = dataclasses.replace(dirichlet_data, responses=np.zeros_like(dirichlet_data.responses))
    wr = recon.reconstruct_wave(zero, X, weights, tau)
    assert not np.any(wr.values)
    wr = recon.reconstruct_wave(dirichlet_data, X, weights, tau)
    assert np.allclose(wr.mode0 + wr.oscillatory, wr.values)
    assert wr.values[0] == 0.0  # sqrt(tau) is below the distance to omega_2
    assert wr.audit_clean
    with pytest.raises(ValueError):
        recon.reconstruct_wave(dirichlet_data, X, weights[:3], tau)
    with pytest.raises(ValueError):
        recon.reconstruct_wave(dirichlet_data, X, weights, tau, order=9)


@pytest.mark.xfail(strict=True, reason="only about four Dirichlet moments are resolved from patch data and the "
                                       "Hausdorff inversion needs about twelve")
def test_wave_reconstruction_within_ten_percent(dirichlet_data, wave_setup):
    weights, _, tau, truth = wave_setup
    wr = recon.reconstruct_wave(dirichlet_data, X, weights, tau)
    assert np.linalg.norm(wr.values - truth) / np.linalg.norm(truth) < 0.10


def test_write_report(tmp_path):
    path = tmp_path / "r.txt"
    recon.write_report(path, {"s": 0.5, "n": 3, "c": np.array([1.0, 2.5]), "ok": True})
    assert path.read_text() == "s = 0.5\nn = 3\nc = 1.0 2.5\nok = True\n"
