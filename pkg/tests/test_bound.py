import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nldirac.algebra import BETA
from nldirac.grid import Grid, SpinorField, herm
from nldirac.spectral import (PotentialBump, PotentialSpec, discrete_spectrum,
                              project_continuous)
from nldirac.bound import (AmplitudeTooLargeError, FieldOutsideChartError,
                           Nonlinearity, _BorderedOperator, bound_family_scan,
                           build_family, decompose_field, r_of_z_apply,
                           scalar_invariant, scan_to_csv, solve_bound_state,
                           symplectic_defect)

GRID = Grid(8, 6.0)
MASS = 1.0
S3 = np.diag([1.0, -1.0, 1.0, -1.0]).astype(complex)
POT = PotentialSpec((PotentialBump(
    -1.0 * BETA - 0.35 * np.eye(4) + 0.25 * S3, width=2.0),))
NL = Nonlinearity((1.0, -0.2))
SCAN_AMPS = (1e-3, 2e-3, 3.5e-3, 6e-3, 1e-2, 3e-2, 0.1)


@pytest.fixture(scope="module")
def sd():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return discrete_spectrum(GRID, MASS, POT, dense=True)


@pytest.fixture(scope="module")
def family(sd):
    return build_family(sd, NL, SCAN_AMPS)


def cont_field(sd, seed=0, size=1e-2):
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=4) + 1j * rng.normal(size=4)
    f = SpinorField(sd.grid, np.exp(-sd.grid.r2 / 2)[..., None] * amp)
    eta = project_continuous(sd, f)
    return eta * (size / eta.norm())


# -- nonlinearity -----------------------------------------------------------


def test_nonlinearity_vanishes_at_zero():
    assert NL.g(0.0) == 0.0
    assert NL.G(0.0) == 0.0


def test_nonlinearity_values():
    s = 0.7
    assert NL.g(s) == pytest.approx(s - 0.2 * s ** 2, rel=1e-14)
    assert NL.dg(s) == pytest.approx(1 - 0.4 * s, rel=1e-14)
    assert NL.G(s) == pytest.approx(s ** 2 / 2 - 0.2 * s ** 3 / 3, rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.0, 2.0), st.lists(st.floats(-1.0, 1.0), min_size=1,
                                      max_size=4))
def test_nonlinearity_primitive_property(s, coeffs):
    nl = Nonlinearity(tuple(coeffs))
    h = 1e-6
    fd = (nl.G(s + h) - nl.G(s - h)) / (2 * h)
    assert fd == pytest.approx(nl.g(s), abs=1e-6 * (1 + abs(nl.g(s))))


def test_scalar_invariant_real_and_gauge_invariant():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(5, 4)) + 1j * rng.normal(size=(5, 4))
    s = scalar_invariant(u)
    assert s.dtype == float
    s2 = scalar_invariant(np.exp(0.43j) * u)
    assert np.allclose(s, s2, atol=1e-14)


# -- Newton solver ----------------------------------------------------------


def test_zero_amplitude_is_linear_mode(sd):
    bs = solve_bound_state(sd, NL, 1, 0.0)
    assert bs.E == sd.eigenvalues[1]
    assert bs.Q.norm() == 0.0


def test_bad_mode_index(sd):
    with pytest.raises(ValueError):
        solve_bound_state(sd, NL, 7, 0.01)


def test_residual_and_constraint(sd):
    from nldirac.spectral import apply_H
    bs = solve_bound_state(sd, NL, 2, 0.05)
    # PDE residual below newton_tol
    s = scalar_invariant(bs.Q.data)
    F = (apply_H(sd, bs.Q).data + NL.g(s)[..., None] * (bs.Q.data @ BETA.T)
         - bs.E * bs.Q.data)
    assert np.sqrt(np.sum(np.abs(F) ** 2) * GRID.cell_volume) < 1e-10
    # correction orthogonal to the linear mode
    assert abs(herm(bs.q, sd.eigenfunctions[2])) < 1e-10
    # Q = z phi + q decomposition is exact
    recon = 0.05 * sd.eigenfunctions[2].data + bs.q.data
    assert np.max(np.abs(recon - bs.Q.data)) < 1e-14


def test_newton_quadratic_convergence(sd):
    bs = solve_bound_state(sd, NL, 3, 0.1)
    hist = bs.residual_history
    assert len(hist) >= 2
    # each recorded residual drops at least quadratically-fast
    for r0, r1 in zip(hist, hist[1:]):
        assert r1 < max(1e-14, 0.1 * r0)


def test_gauge_covariance(sd):
    th = 1.1
    a = 0.05
    b0 = solve_bound_state(sd, NL, 2, a)
    b1 = solve_bound_state(sd, NL, 2, a * np.exp(1j * th))
    assert np.max(np.abs(b1.Q.data - np.exp(1j * th) * b0.Q.data)) < 1e-9
    assert abs(b1.E - b0.E) < 1e-9


def test_bordered_operator_adjoint_dot_test(sd):
    bs = solve_bound_state(sd, NL, 0, 0.08)
    A = _BorderedOperator(sd, NL, bs.Q.data, bs.E,
                          sd.eigenfunctions[0].data)
    rng = np.random.default_rng(11)
    x = rng.normal(size=A.shape[1])
    y = rng.normal(size=A.shape[0])
    lhs = np.dot(y, A.matvec(x))
    rhs = np.dot(A.rmatvec(y), x)
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_divergence_raises(sd):
    with pytest.raises(AmplitudeTooLargeError):
        solve_bound_state(sd, NL, 2, 50.0)


# -- family scan ------------------------------------------------------------


def test_family_scan_scalings(sd):
    rep = bound_family_scan(sd, NL, 2, (1e-3, 2e-3, 3.5e-3, 6e-3, 1e-2))
    assert abs(rep["slope_q"] - 3.0) < 0.2
    assert abs(rep["slope_E"] - 2.0) < 0.2
    assert rep["phase_error"] < 1e-9
    assert rep["energy_error"] < 1e-9


def test_family_csv_export(sd):
    rep = bound_family_scan(sd, NL, 1, (1e-3, 3e-3, 1e-2))
    text = scan_to_csv(rep)
    lines = text.strip().splitlines()
    assert lines[0] == "abs_z,E,q_l2,q_sigma2,newton_iterations"
    assert len(lines) == 4
    a, E, ql2, qs2, its = lines[-1].split(",")
    assert float(a) == 1e-2
    assert float(qs2) >= float(ql2) > 0
    assert int(its) >= 1


def test_family_interpolation_matches_direct_solve(sd, family):
    # off-sample amplitude: spline vs fresh Newton solve
    z = 0.02 * np.exp(0.6j)
    direct = solve_bound_state(sd, NL, 2, z)
    assert (family.Q(2, z) - direct.Q).norm() < 1e-8
    assert family.energy(2, z) == pytest.approx(direct.E, abs=1e-8)


def test_family_radius_enforced(family):
    with pytest.raises(AmplitudeTooLargeError):
        family.Q(0, 2 * family.a0)


# -- chart map --------------------------------------------------------------


def test_r_of_zero_is_identity(sd, family):
    eta = cont_field(sd, seed=1)
    out = r_of_z_apply(family, np.zeros(4, dtype=complex), eta)
    assert np.array_equal(out.data, eta.data)


def test_r_of_z_output_in_continuous_chart(sd, family):
    # membership in H_c[z]: the symplectic pairings vanish to 1e-6 ||eta||
    rng = np.random.default_rng(7)
    for seed in range(3):
        eta = cont_field(sd, seed=seed)
        z = 1e-2 * (rng.uniform(-1, 1, 4) + 1j * rng.uniform(-1, 1, 4))
        out = r_of_z_apply(family, z, eta)
        raw = np.max(np.abs(symplectic_defect(family, z, eta)))
        fixed = np.max(np.abs(symplectic_defect(family, z, out)))
        assert fixed < 1e-6 * eta.norm()
        assert fixed < 1e-3 * raw  # the correction does the work


def test_r_of_z_near_identity_quadratic(sd, family):
    eta = cont_field(sd, seed=2, size=1.0)
    devs = []
    for s in (1e-2, 5e-3, 2.5e-3):
        z = s * np.array([1.0, 1j, -1.0, -1j])
        devs.append((r_of_z_apply(family, z, eta) - eta).norm())
    assert devs[0] < 1e-3 * eta.norm()
    # ||R[z] eta - eta|| = O(|z|^2): quartering under halving
    assert devs[1] < 0.3 * devs[0]
    assert devs[2] < 0.3 * devs[1]


def test_r_of_z_linear_in_eta(sd, family):
    eta1, eta2 = cont_field(sd, seed=3), cont_field(sd, seed=4)
    z = 1e-2 * np.array([1.0, -1j, 0.5, 1j])
    lhs = r_of_z_apply(family, z, eta1 * 2.0 + eta2 * (-0.5))
    rhs = r_of_z_apply(family, z, eta1) * 2.0 \
        + r_of_z_apply(family, z, eta2) * (-0.5)
    assert (lhs - rhs).norm() < 1e-12


# -- decomposition ----------------------------------------------------------


def test_decompose_round_trip(sd, family):
    rng = np.random.default_rng(5)
    z = 1e-2 * (rng.uniform(-1, 1, 4) + 1j * rng.uniform(-1, 1, 4))
    eta = cont_field(sd, seed=6)
    u_data = sum(family.Q(j, z[j]).data for j in range(4)) \
        + r_of_z_apply(family, z, eta).data
    u = SpinorField(GRID, u_data)
    z2, eta2 = decompose_field(sd, NL, family, u)
    assert np.max(np.abs(z2 - z)) < 1e-6 * max(np.max(np.abs(z)), eta.norm())
    assert (eta2 - eta).norm() < 1e-6 * eta.norm()


def test_decompose_pure_bound_state(sd, family):
    z = np.array([0.0, 0.0, 8e-3 * np.exp(0.3j), 0.0])
    u = family.Q(2, z[2])
    z2, eta2 = decompose_field(sd, NL, family, u)
    assert np.max(np.abs(z2 - z)) < 1e-10
    assert eta2.norm() < 1e-10


def test_decompose_pure_continuous(sd, family):
    eta = cont_field(sd, seed=8)
    z2, eta2 = decompose_field(sd, NL, family, eta)
    # amplitudes vanish beyond the nonlinear coupling scale
    assert np.max(np.abs(z2)) < 1e-6
    assert (eta2 - eta).norm() < 1e-6 * eta.norm()


def test_decompose_gauge_equivariance(sd, family):
    th = 0.9
    z = np.array([5e-3, -3e-3 + 4e-3j, 2e-3j, 1e-3])
    eta = cont_field(sd, seed=9)
    u_data = sum(family.Q(j, z[j]).data for j in range(4)) \
        + r_of_z_apply(family, z, eta).data
    u = SpinorField(GRID, u_data)
    z1, eta1 = decompose_field(sd, NL, family, u)
    z2, eta2 = decompose_field(sd, NL, family, u * np.exp(1j * th))
    assert np.max(np.abs(z2 - np.exp(1j * th) * z1)) < 1e-8
    assert (eta2 - eta1 * np.exp(1j * th)).norm() < 1e-8


def test_decompose_outside_chart_raises(sd, family):
    # eigenmode content far beyond the certified family radius
    u = sd.eigenfunctions[0] * (10.0 * family.a0)
    with pytest.raises(FieldOutsideChartError):
        decompose_field(sd, NL, family, u)
