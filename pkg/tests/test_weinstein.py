import json

import numpy as np
import pytest

from weinfib import fibred_hodge as fh
from weinfib import models, poincare, weinstein
from weinfib.errors import BackendError, ChartDomainError, PolarisationError
from weinfib.fibred_forms import FieldForm, discretize, torus_points
from weinfib.grids import BaseGrid, FibreComplex


def chart_for(model, L=None):
    L = model.zero_section() if L is None else L
    lam = poincare.liouville_from_symplectic(model, L)
    return weinstein.build_chart(model, L, lam, model.polarisation())


@pytest.fixture(scope="module")
def cyl():
    return chart_for(models.cylinder(0.0, base_samples=4))


@pytest.fixture(scope="module")
def cyl_c():
    return chart_for(models.cylinder(0.5, base_samples=4))


@pytest.fixture(scope="module")
def t4():
    return chart_for(models.torus4(0.0, base_samples=2))


def test_standard_cylinder_chart_is_identity_in_momentum(cyl):
    q = np.linspace(0, 6, 7)[:, None]
    a = np.linspace(-0.4, 0.4, 7)[:, None]
    np.testing.assert_allclose(cyl.forward(0.0, q, a), np.hstack([q, a]), atol=1e-13)


def test_b_dependent_chart_scales_by_c(cyl_c):
    b = np.pi / 2
    q, a = np.array([[0.3], [2.0]]), np.array([[0.2], [-0.2]])
    np.testing.assert_allclose(cyl_c.forward(b, q, a), np.hstack([q, a / 1.5]), atol=1e-13)
    assert cyl_c.radius == pytest.approx(0.25)


def test_torus4_chart_is_blockwise(t4):
    q = torus_points(2, 3)
    a = np.tile([0.1, -0.3], (9, 1))
    np.testing.assert_allclose(t4.forward(0.0, q, a), np.hstack([q, a]), atol=1e-13)
    assert t4.diagnostics["commutation_defect"] <= 1e-5


def test_kappa_chart_solves_the_cubic():
    ch = chart_for(models.cylinder(0.0, kappa=0.5, base_samples=2))
    y = ch.forward(0.0, [[1.0]], [[0.3]])
    r = y[0, 1]
    assert r + 0.5 * r ** 3 / 3 == pytest.approx(0.3, abs=1e-10)


@pytest.mark.parametrize("name", ["cyl", "cyl_c", "t4"])
def test_chart_is_symplectic_and_inverse_roundtrips(name, request):
    ch = request.getfixturevalue(name)
    for b in ch.model.base.samples[:2]:
        rep = weinstein.verify_symplectic(ch, b, n_probe=20, seed=3)
        assert rep["symplectic_defect"] <= 1e-5
        assert rep["zero_section_defect"] <= 1e-9
    rng = np.random.default_rng(0)
    q = rng.uniform(0, 2 * np.pi, (5, ch.n))
    a = rng.uniform(-0.9 * ch.radius, 0.9 * ch.radius, (5, ch.n))
    y = ch.forward(0.7, q, a)
    q2, a2 = ch.inverse(0.7, y)
    np.testing.assert_allclose(a2, a, atol=1e-6)
    np.testing.assert_allclose(np.mod(q2 - q + np.pi, 2 * np.pi) - np.pi, 0, atol=1e-6)


def test_chart_domain_is_enforced(cyl):
    with pytest.raises(ChartDomainError):
        cyl.forward(0.0, [[0.0]], [[0.9]])


def test_subbundle_to_form_oracles(cyl, t4):
    q1 = torus_points(1, 8)
    zero = weinstein.subbundle_to_form(cyl, cyl.L)
    assert np.max(np.abs(zero(0.0, q1))) < 1e-12
    near = cyl.model.graph(FieldForm.constant(1, 1, [0.1]))
    a = weinstein.subbundle_to_form(cyl, near)
    np.testing.assert_allclose(a(0.0, q1), 0.1, atol=1e-12)
    assert weinstein.roundtrip_defect(cyl, near, a) <= 1e-6
    dg = models.named_form("exact_cos")
    a = weinstein.subbundle_to_form(t4, t4.model.graph(dg), check_per_axis=4)
    q2 = torus_points(2, 4)
    np.testing.assert_allclose(a(0.0, q2), dg(0.0, q2), atol=1e-12)


def test_subbundle_outside_chart_reports_samples(t4):
    with pytest.raises(ChartDomainError) as info:
        weinstein.subbundle_to_form(t4, t4.model.graph(FieldForm.constant(1, 2, [0.7, 0.0])), check_per_axis=2)
    assert info.value.samples == list(range(t4.model.base.size))


def test_build_chart_requires_lambda_vanishing_on_L():
    m = models.cylinder(base_samples=2)
    lam = poincare.liouville_from_symplectic(m, m.zero_section())
    shifted = m.graph(FieldForm.constant(1, 1, [0.1]))
    with pytest.raises(PolarisationError):
        weinstein.build_chart(m, shifted, lam, m.polarisation())


def test_manifest_is_json(cyl_c):
    man = json.loads(json.dumps(cyl_c.manifest()))
    assert set(man) >= {"model", "lambda", "radius", "h"}
    assert man["model"]["c_amplitude"] == 0.5


@pytest.mark.parametrize("name,lagrangian,defect", [("const", True, 0.0), ("zero", True, 0.0),
                                                    ("exact_cos", True, 0.0), ("sin_t2_dt1", False, 1.0),
                                                    ("mixed", False, 1.0)])
def test_classifier_on_named_forms(name, lagrangian, defect):
    form = FieldForm.zeros(1, 2) if name == "zero" else models.named_form(name)
    v = weinstein.is_lagrangian(form, 1e-6)
    assert v.lagrangian is lagrangian
    assert v.defect == pytest.approx(defect, abs=1e-9)


def test_classifier_on_circle_forms_is_always_lagrangian():
    assert weinstein.is_lagrangian(FieldForm(1, 1, lambda b, q: np.sin(q))).lagrangian


def test_cochain_classifier_converges_at_second_order():
    g = BaseGrid.uniform(2)
    gaps = []
    for N in (16, 32, 64):
        a = discretize(models.named_form("sin_t2_dt1"), FibreComplex((N, N)), g, "sample")
        gaps.append(1 - weinstein.is_lagrangian(a).defect)
    rates = np.log2(np.array(gaps[:-1]) / gaps[1:])
    np.testing.assert_allclose(rates, 2.0, atol=0.05)


def test_lagrangianize_recovers_constant_and_fixes_closed():
    C, g = FibreComplex((32, 32)), BaseGrid.uniform(2)
    D = fh.build_delta(C, g, degrees=[1])
    const = discretize(models.named_form("const"), C, g)
    out = weinstein.lagrangianize(D, discretize(models.named_form("mixed"), C, g))
    assert (out - const).sup_norm() <= 1e-6
    assert (weinstein.lagrangianize(D, const) - const).sup_norm() <= 1e-8
    assert weinstein.lagrangianize(D, discretize(models.named_form("sin_t2_dt1"), C, g)).sup_norm() < 1e-10
    with pytest.raises(BackendError):
        weinstein.lagrangianize(D, models.named_form("const"))
