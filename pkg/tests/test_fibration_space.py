import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from weinfib import fibration_space as fs
from weinfib import models
from weinfib.errors import ConfigurationError, InversionError, RankError

OMEGA_T4 = models.product_MxB(base_samples=1)


def omega_matrix(x):
    return OMEGA_T4.omega_matrix(0.0, x)


def surface_map(a):
    return fs.FibrationMap(lambda x: x[:, :1] + a * np.sin(x[:, :1]), 2, 1, name=f"theta+{a}sin")


@pytest.mark.parametrize("a,subbundle", [(0.0, True), (0.5, True), (1.0, False)])
def test_graph_of_surface_maps(a, subbundle):
    g = fs.graph_of(surface_map(a))
    assert g.is_subbundle is subbundle
    if subbundle:
        assert g.submersion.sigma_min == pytest.approx(1 - a, abs=1e-6)
        for b, pts in g.fibres.items():
            assert np.max(np.abs(g.pi.residual(pts[:, :2], np.array(b)))) < 1e-10
            np.testing.assert_array_equal(pts[:, 2], b[0])
    else:
        np.testing.assert_allclose(g.submersion.failures[:, 0], np.pi, atol=1e-9)


def test_projection_fibre_is_the_circle_theta_equals_b():
    g = fs.graph_of(surface_map(0.0), base_points=[[1.0]])
    pts = g.fibres[(1.0,)]
    np.testing.assert_allclose(np.mod(pts[:, 0], 2 * np.pi), 1.0, atol=1e-12)
    assert np.ptp(pts[:, 1]) > 5


def test_rank_drop_between_grid_points_is_found():
    pi = fs.FibrationMap(lambda x: x[:, :1] + np.sin(x[:, :1] - 0.037), 2, 1)
    rep = fs.submersion_test(pi, per_axis=16)
    assert not rep.passed
    assert rep.sigma_min < 1e-6


@pytest.mark.parametrize("axes,lagrangian,defect", [((0, 1), True, 0.0), ((0, 3), True, 0.0), ((0, 2), False, 1.0)])
def test_lagrangian_fibration_table_and_weinstein_agreement(axes, lagrangian, defect):
    pi = fs.projection_map(axes, 4)
    direct = fs.lagrangian_fibration_test(omega_matrix, pi)
    assert (direct.lagrangian, direct.kernel_dim) == (lagrangian, 2)
    assert direct.defect == pytest.approx(defect, abs=1e-12)
    via_chart = fs.weinstein_fibre_verdict(pi)
    assert via_chart.lagrangian is lagrangian
    assert via_chart.defect == pytest.approx(defect, abs=1e-8)


def test_nonlinear_lagrangian_fibration():
    # pi(theta, r) = (theta1 + 0.3 sin r1, theta2): fibres are graphs over r, isotropic
    pi = fs.FibrationMap(lambda x: np.stack([x[:, 0] + 0.3 * np.sin(x[:, 2]), x[:, 1]], axis=1), 4, 2)
    assert fs.lagrangian_fibration_test(omega_matrix, pi, per_axis=4).lagrangian
    assert fs.weinstein_fibre_verdict(pi, per_axis=2).lagrangian


def test_rank_deficient_kernel_raises():
    pi = fs.FibrationMap(lambda x: np.stack([x[:, 0], 2 * x[:, 0]], axis=1), 4, 2)
    with pytest.raises(RankError):
        fs.lagrangian_fibration_test(omega_matrix, pi)


def test_sheared_fibre_slopes():
    T = np.array([[1.0, 1.0], [1.0, 2.0]])
    V = np.eye(4)[:, [2, 3]]
    np.testing.assert_allclose(fs.fibre_graph_slope(V, T), np.linalg.inv(T), atol=1e-14)
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    S = fs.shear(T)
    np.testing.assert_array_equal(S.T @ J @ S, J)


def ginv(a, y):
    return np.array([brentq(lambda z: z + a * np.sin(z) - v, v - 1, v + 1, xtol=1e-15) for v in y])


def test_psi_matches_newton_oracle():
    bf = fs.BiFibration.torus(256)
    alpha = bf.section(0, lambda x: np.stack([x, x + 0.1 * np.sin(x)], axis=-1))
    rep = fs.psi_reparametrize(alpha)
    y = bf.nodes
    out = rep.section(y)
    np.testing.assert_allclose(out[:, 0], ginv(0.1, y), atol=1e-10)
    np.testing.assert_allclose(out[:, 1], y, atol=1e-10)
    assert rep.section_defect <= 1e-8
    assert rep.graph_defect <= 1e-8
    assert rep.max_iterations <= 50


def test_psi_of_common_section_is_itself():
    bf = fs.BiFibration.torus(64)
    rep = fs.psi_reparametrize(bf.identity_section(0))
    assert np.max(np.abs(rep.section.values)) == 0


@given(amp=st.floats(0.0, 0.3))
def test_psi_roundtrip(amp):
    bf = fs.BiFibration.torus(256)
    alpha = bf.section(0, lambda x: np.stack([x, x + amp * np.sin(x) + 0.5 * amp * np.cos(2 * x)], axis=-1))
    assert fs.roundtrip_residual(alpha) <= 1e-6


def test_psi_roundtrip_is_fourth_order():
    res = []
    for n in (64, 128, 256):
        bf = fs.BiFibration.torus(n)
        res.append(fs.roundtrip_residual(bf.section(0, lambda x: np.stack([x, x + 0.3 * np.sin(x)], axis=-1))))
    rates = np.log2(np.array(res[:-1]) / res[1:])
    assert np.all(rates > 3.7)


def test_non_invertible_base_map_is_outside_V1():
    bf = fs.BiFibration.torus(128)
    with pytest.raises(InversionError):
        fs.psi_reparametrize(bf.section(0, lambda x: np.stack([x, x + 1.5 * np.sin(x)], axis=-1)))


def test_section_and_direction_checks():
    bf = fs.BiFibration.torus(32)
    with pytest.raises(ConfigurationError):
        bf.section(0, lambda x: np.stack([x + 0.1, x], axis=-1))
    with pytest.raises(ConfigurationError):
        fs.psi_inverse(bf.identity_section(0))
    with pytest.raises(ConfigurationError):
        fs.BiFibration([1.0, 2.0], (lambda z: z[..., 0], lambda z: z[..., 1]), 16)


def test_invert_circle_map_uses_bracketing_when_newton_is_misled():
    A = lambda x: x + 0.9 * np.sin(x)
    bad_slope = lambda x: np.full_like(x, 1e-3)
    y = np.linspace(0, 6, 13)
    x, its = fs.invert_circle_map(A, y, dA=bad_slope)
    np.testing.assert_allclose(A(x), y, atol=1e-10)


def test_invert_torus_map_small_perturbation():
    F = lambda x: x + 0.1 * np.sin(x[:, ::-1])
    y = np.random.default_rng(2).uniform(0, 6, (10, 2))
    x = fs.invert_torus_map(F, y)
    np.testing.assert_allclose(F(x), y, atol=1e-10)
