"""End-to-end acceptance criteria, one test per criterion.

Every test records a single ``criterion N: PASS|FAIL`` line; the lines are
printed as they are produced and repeated in the terminal summary.
"""
import json
import time

import numpy as np
import pytest

from weinfib import cli, models, poincare, weinstein
from weinfib import fibration_space as fs
from weinfib import fibred_hodge as fh
from weinfib import polarization as pol
from weinfib.fibred_forms import CochainForm, FieldForm, discretize, fibred_d, torus_points
from weinfib.grids import BaseGrid, FibreComplex

RESULTS = {}

TILT = FieldForm(1, 1, lambda b, q: 0.2 * np.sin(q), lambda b, q: 0.2 * np.cos(q)[:, :, None])


def record(n, title, checks):
    """``checks`` maps a label to ``(value, bound)``; passes iff every value is within its bound."""
    ok = all(v <= bound for v, bound in checks.values())
    detail = ", ".join(f"{k}={v:.3g}<={bound:g}" for k, (v, bound) in checks.items())
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
    RESULTS[n] = line
    print(line)
    failed = [k for k, (v, bound) in checks.items() if not v <= bound]
    assert ok, f"{title}: {failed}"


def test_criterion_1_exactness_bit_exact():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    base = BaseGrid.uniform(16)
    shapes = [(8, 8), (16, 12), (32, 32), (64, 64), (6, 5, 4)]
    worst, n_inputs = 0.0, 0
    for i in range(200):
        C = FibreComplex(shapes[i % len(shapes)])
        k = i % (C.dim - 1)
        # dyadic values: every signed partial sum is exactly representable
        vals = rng.integers(-2 ** 20, 2 ** 20, (base.size, C.n_cells(k))) / 2 ** 10
        dd = fibred_d(fibred_d(CochainForm(k, C, base, vals)))
        worst = max(worst, float(np.max(np.abs(dd.values))))
        n_inputs += 1
    # integer coboundary matrices compose to the zero matrix
    nnz = 0
    for shape in shapes:
        C = FibreComplex(shape)
        for k in range(C.dim - 1):
            prod = (C.coboundary(k + 1) @ C.coboundary(k)).tocsr()
            prod.eliminate_zeros()
            nnz += prod.nnz
    elapsed = time.perf_counter() - t0
    assert n_inputs == 200
    record(1, "d_p o d_p = 0 bit-exact", {"sup|dd|": (worst, 0.0), "nnz(D D)": (nnz, 0),
                                           "seconds": (elapsed, 10.0)})


def test_criterion_2_hodge_right_inverse():
    t0 = time.perf_counter()
    C, base = FibreComplex((64, 64)), BaseGrid.uniform(16)
    D = fh.build_delta(C, base)
    rng = np.random.default_rng(2)
    res = idem = 0.0
    n_forms = int(np.ceil(100 / base.size))      # each form carries one cochain per base sample
    for k in range(C.dim):
        for _ in range(n_forms):
            rep = fh.decomposition_report(D, CochainForm(k, C, base, rng.standard_normal((base.size, C.n_cells(k)))))
            res = max(res, rep["sup_residual_d_delta_d"])
            idem = max(idem, rep["idempotence_residual"])
    # closed 1-forms: exact part plus a base-dependent harmonic part
    harm = C.harmonic_basis(1).toarray()
    coeffs = np.stack([np.cos(base.samples), 1 + 0.5 * np.sin(base.samples)], axis=1)
    closed = fibred_d(CochainForm(0, C, base, rng.standard_normal((base.size, C.n_cells(0))))) \
        + CochainForm(1, C, base, coeffs @ harm.T)
    kernel = float(np.max(np.abs(fh.projection(D, closed).values)))
    closed0 = CochainForm(0, C, base, np.outer(np.sin(base.samples), np.ones(C.n_cells(0))))
    kernel = max(kernel, float(np.max(np.abs(fh.projection(D, closed0).values))))
    elapsed = time.perf_counter() - t0
    record(2, "Hodge right inverse at 64^2 x 16", {"|d delta d - d|/|d|": (res, 1e-8), "idempotence": (idem, 1e-8),
                                                   "|P closed|": (kernel, 1e-8), "seconds": (elapsed, 60.0)})


def _one_form_cylinder():
    return FieldForm(1, 2, lambda b, x: np.stack([x[:, 1] * np.sin(x[:, 0]), np.cos(x[:, 0]) * (1 + b)], axis=1))


def test_criterion_3_fibred_poincare_lemma():
    homotopy = on_L = 0.0
    cases = [(models.cylinder(0.5), TILT, [models.cylinder(0.5).omega, _one_form_cylinder()], 5),
             (models.cylinder(kappa=0.5), TILT, [models.cylinder(kappa=0.5).omega, _one_form_cylinder()], 5),
             (models.torus4(0.5, base_samples=2), models.named_form("exact_cos"),
              [models.torus4(0.5, base_samples=2).omega], 3)]
    for m, alpha, forms, per_axis in cases:
        L = m.graph(alpha)
        rho = poincare.linear_retraction(m, L)
        pts, onL = poincare.tubular_points(m, L, per_axis)
        for beta in forms:
            homotopy = max(homotopy, poincare.homotopy_residual(beta, rho, m.base.samples[:2], pts))
            P = poincare.homotopy_P(beta, rho)
            on_L = max(on_L, max(float(np.max(np.abs(P(b, onL)))) for b in m.base.samples[:2]))
    oracle = closed = 0.0
    for amp in (0.0, 0.5):
        m = models.cylinder(amp)
        L = m.zero_section()
        lam = poincare.liouville_from_symplectic(m, L)
        pts, _ = poincare.tubular_points(m, L, 6)
        for b in m.base.samples:
            # -c(b) r dtheta; the standard cylinder has c = 1
            want = np.stack([-m.c(b) * pts[:, 1], 0 * pts[:, 1]], axis=1)
            oracle = max(oracle, float(np.max(np.abs(lam(b, pts) - want))))
        closed = max(closed, poincare.liouville_report(m, L, lam)["closedness_defect"])
    record(3, "fibred Poincare lemma", {"homotopy residual": (homotopy, 1e-6), "P beta on L": (on_L, 1e-10),
                                        "lambda vs -c r dtheta": (oracle, 1e-10), "|d lambda - omega|": (closed, 1e-6)})


def test_criterion_4_polarisation():
    solve = eig = iso = 0.0
    for m in (models.cylinder(0.5), models.cylinder(kappa=0.5), models.torus4(0.5, base_samples=2)):
        L = m.graph(TILT) if m.kappa else m.zero_section()
        lam = poincare.liouville_from_symplectic(m, L)
        Y = pol.liouville_field(m, lam)
        q = torus_points(m.n, 64 if m.n == 1 else 8)       # 64 points of L
        for b in m.base.samples[:2]:
            x = L.point(b, q)
            pts, _ = poincare.tubular_points(m, L, 4, b=b)
            solve = max(solve, Y.residual(b, pts), Y.residual(b, x))
            s = pol.split_summary(pol.jacobian_split(Y, b, x, L, q))
            eig = max(eig, s["eigenvalue_deviation"])
            iso = max(iso, s["E1_isotropy"])
    m = models.cylinder(0.5)
    Y = pol.liouville_field(m, poincare.liouville_from_symplectic(m, m.zero_section()))
    pts, _ = poincare.tubular_points(m, m.zero_section(), 3, shrink=0.5)
    conf = pol.conformal_check(m, Y, 0.0, pts, t_max=1.0, h=1e-3)["residual"]
    record(4, "polarisation", {"field solve": (solve, 1e-9), "eigenvalues vs {0,1}": (eig, 1e-6),
                               "E1 isotropy": (iso, 1e-8), "conformal t=1": (conf, 1e-4)})


def _chart(m):
    L = m.zero_section()
    return weinstein.build_chart(m, L, poincare.liouville_from_symplectic(m, L), m.polarisation())


def test_criterion_5_weinstein_chart():
    symp = zero = oracle = 0.0
    rng = np.random.default_rng(5)
    for m in (models.cylinder(0.0, base_samples=4), models.cylinder(0.5, base_samples=8),
              models.torus4(0.0, base_samples=2), models.torus4(0.5, base_samples=2)):
        ch = _chart(m)
        for i, b in enumerate(m.base.samples):
            rep = weinstein.verify_symplectic(ch, b, n_probe=100, seed=i)
            symp = max(symp, rep["symplectic_defect"])
            zero = max(zero, rep["zero_section_defect"])
            q = rng.uniform(0, 2 * np.pi, (20, m.n))
            a = rng.uniform(-0.9 * ch.radius, 0.9 * ch.radius, (20, m.n))
            y = ch.forward(b, q, a)
            if m.n == 1:
                # exact chart (theta, p / c(b))
                oracle = max(oracle, float(np.max(np.abs(y - np.hstack([q, a / m.c(b)])))))
            # fibre preservation: the chart never leaves the fibre over b, and the leaf foot is q
            oracle = max(oracle, float(np.max(np.abs(np.mod(ch.leaf_foot(b, y) - q + np.pi, 2 * np.pi) - np.pi))))
    record(5, "Weinstein chart", {"zero section on L": (zero, 1e-9), "symplectic defect": (symp, 1e-5),
                                  "exact-chart oracle": (oracle, 1e-9)})


def _classifier_suite(rng):
    """25 closed forms (constants and exact Fourier modes) and 25 curl modes."""
    cases = []
    for i in range(25):
        if i % 2 == 0:
            cases.append((FieldForm.constant(1, 2, rng.uniform(-1, 1, 2)), True))
        else:
            k1, k2 = rng.integers(1, 4, 2)
            cases.append((models.fourier_form(2, rng.uniform(0.05, 1.0), 0.0, k1, k2, "exact"), True))
    for i in range(25):
        k1, k2 = rng.integers(1, 4, 2)
        A, B = rng.uniform(0.1, 1.0, 2) * rng.choice([-1, 1], 2)
        form = models.fourier_form(2, A, B, k1, k2, "curl")
        if i % 3 == 0:
            form = form + FieldForm.constant(1, 2, rng.uniform(-1, 1, 2))
        cases.append((form, False))
    return cases


def test_criterion_6_lagrangian_classifier():
    errors = 0
    for form, closed in _classifier_suite(np.random.default_rng(6)):
        errors += weinstein.is_lagrangian(form, 1e-6, base_points=(0.0, 1.0)).lagrangian is not closed
    defect = weinstein.is_lagrangian(models.named_form("sin_t2_dt1")).defect
    g = BaseGrid.uniform(2)
    gaps = []
    for N in (16, 32, 64):
        a = discretize(models.named_form("sin_t2_dt1"), FibreComplex((N, N)), g, "sample")
        gaps.append(1 - weinstein.is_lagrangian(a).defect)
    rates = np.log2(np.array(gaps[:-1]) / gaps[1:])
    record(6, "Lagrangian classifier", {"misclassified of 50": (errors, 0), "|defect - 1|": (abs(defect - 1), 1e-4),
                                        "|rate - 2|": (float(np.max(np.abs(rates - 2))), 0.05)})


def test_criterion_7_lagrangianize():
    C, g = FibreComplex((64, 64)), BaseGrid.uniform(4)
    D = fh.build_delta(C, g, degrees=[1])
    out = weinstein.lagrangianize(D, discretize(models.named_form("mixed"), C, g))
    err = (out - discretize(models.named_form("const"), C, g)).sup_norm()
    record(7, "lagrangianize 0.3 dq1 + sin q2 dq1", {"|result - 0.3 dq1|": (err, 1e-6)})


def test_criterion_8_fibration_space():
    bf = fs.BiFibration.torus(256)
    psi = fs.roundtrip_residual(bf.section(0, lambda x: np.stack([x, x + 0.1 * np.sin(x)], axis=-1)))
    submersion_errors = 0
    for a, expected in ((0.0, True), (0.5, True), (1.0, False)):
        pi = fs.FibrationMap(lambda x, a=a: x[:, :1] + a * np.sin(x[:, :1]), 2, 1)
        submersion_errors += fs.submersion_test(pi).passed is not expected
    omega = models.product_MxB(base_samples=1)
    table_errors = disagreements = 0
    for axes, expected in (((0, 1), True), ((0, 3), True), ((0, 2), False)):
        pi = fs.projection_map(axes, 4)
        direct = fs.lagrangian_fibration_test(lambda x: omega.omega_matrix(0.0, x), pi)
        via_chart = fs.weinstein_fibre_verdict(pi)
        table_errors += direct.lagrangian is not expected
        disagreements += direct.lagrangian is not via_chart.lagrangian
    record(8, "fibration space", {"Psi round trip": (psi, 1e-6), "submersion mismatches": (submersion_errors, 0),
                                  "T4 table mismatches": (table_errors, 0), "chart disagreements": (disagreements, 0)})


SCENARIO = """\
schema_version = 1
seed = 2024
model.name = cylinder
model.c_amplitude = 0.5
model.base_samples = 8
pipeline = liouville, polarize, weinstein-build, weinstein-verify, classify
liouville.table = true
weinstein-verify.n_probe = 100
classify.form = const
classify.dim = 1
"""


def _strip_times(obj):
    if isinstance(obj, dict):
        return {k: _strip_times(v) for k, v in obj.items() if k != "wall_time_ms"}
    if isinstance(obj, list):
        return [_strip_times(v) for v in obj]
    return obj


def test_criterion_9_cli_cylinder_scenario(tmp_path):
    path = tmp_path / "cylinder.txt"
    path.write_text(SCENARIO, encoding="utf-8")
    codes, times, outs = [], [], []
    for name in ("first", "second"):
        out = tmp_path / name
        t0 = time.perf_counter()
        codes.append(cli.main(["run", "--scenario", str(path), "--out", str(out)]))
        times.append(time.perf_counter() - t0)
        outs.append(out)
    reports = [_strip_times(json.loads((o / "report.json").read_text())) for o in outs]
    steps = [sorted(p.name for p in (o / "steps").iterdir()) for o in outs]
    same_steps = steps[0] == steps[1] and all(
        _strip_times(json.loads((outs[0] / "steps" / s).read_text()))
        == _strip_times(json.loads((outs[1] / "steps" / s).read_text())) for s in steps[0])
    csvs = sorted(p.name for p in (outs[0] / "tables").glob("*.csv"))
    same_csv = bool(csvs) and all((outs[0] / "tables" / c).read_bytes() == (outs[1] / "tables" / c).read_bytes()
                                  for c in csvs)
    mismatches = int(reports[0] != reports[1]) + int(not same_steps) + int(not same_csv)
    record(9, "CLI cylinder scenario", {"max exit code": (max(codes), 0), "seconds": (max(times), 60.0),
                                        "rerun mismatches": (mismatches, 0)})
