"""Family Weinstein charts around a Lagrangian subbundle, and the Lagrangian classifier.

A covector ``a = sum_i a_i dq_i`` at ``x in L_b`` is sent to the point
reached from ``x`` by flowing, for times ``a_i``, along the Hamiltonian
vector fields of the leaf coordinates ``H_i = q_i(foot of the leaf)``.  These
flows are tangent to the leaves of the polarisation and commute, which is
the affine structure of the leaves made explicit.  With the convention
``omega(X_H, .) = -dH`` the chart pulls ``omega_b`` back to the canonical
form ``sum_i dq_i ^ dp_i`` of ``T* L_b``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, ChartDomainError, PolarisationError
from .fibred_forms import H_FD, FieldForm, fibred_d, sup_on, torus_points
from .fibred_hodge import project_closed
from .integrators import central_jacobian, rk4_step
from .polarization import liouville_field, transverse_leaf

ZERO_SECTION_TOL = 1e-9
COMMUTE_TOL = 1e-5
INVERSE_TOL = 1e-12


def leaf_flow_field(model, pol, b, x, i):
    """``X`` with ``omega(X, .) = -dH_i`` for the leaf coordinate ``H_i``."""
    dH = np.asarray(pol.coordinates_jac(b, x))[:, i, :]
    Om = model.omega_matrix(b, x)
    return np.linalg.solve(np.swapaxes(Om, 1, 2), -dH[..., None])[..., 0]


@dataclass(eq=False)
class WeinsteinChart:
    """Chart ``phi: V in V*(L) -> U in X``, fibre by fibre.

    Attributes:
        model, L, lam, pol: the data the chart was built from.
        h: RK4 step bound.
        radius: covector sup-norm radius of the domain ``V``.
        steps: fixed RK4 step count per unit flow parameter.
        provenance: description of ``lam``.
    """

    model: object
    L: object
    lam: object
    pol: object
    h: float
    radius: float
    steps: int
    provenance: str = "lambda = -P omega (linear retraction)"
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.model.n

    def hamiltonian_field(self, b, x, i):
        return leaf_flow_field(self.model, self.pol, b, x, i)

    def forward(self, b, q, a, order=None, check_domain=True):
        """``phi_b(q, a)``: points of ``X_b`` for base points ``q`` on ``L_0`` and covectors ``a``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if check_domain:
            bad = np.max(np.abs(a), axis=1) > self.radius * (1 + 1e-9) + 10 * H_FD
            if np.any(bad):
                raise ChartDomainError("covector outside the chart domain", np.flatnonzero(bad))
        x = self.L.point(b, q)
        ds = 1.0 / self.steps
        for i in (range(self.n) if order is None else order):
            ai = a[:, i:i + 1]
            if not np.any(ai):
                continue
            for _ in range(self.steps):
                x = rk4_step(lambda y: ai * self.hamiltonian_field(b, y, i), x, ds)
        if check_domain and np.any(np.max(np.abs(self.L.offset(b, x)), axis=1) >= self.model.r_max):
            raise ChartDomainError("leaf flow escaped the tubular domain; shrink the chart", [])
        return x

    def __call__(self, b, q, a):
        return self.forward(b, q, a)

    def leaf_foot(self, b, y, L=None):
        """Graph coordinates ``q`` of the point of ``L`` on the leaf through ``y`` (Newton)."""
        L = self.L if L is None else L
        target = np.asarray(self.pol.coordinates(b, y))
        q = target.copy()
        for _ in range(50):
            r = np.asarray(self.pol.coordinates(b, L.point(b, q))) - target
            if np.max(np.abs(r)) < INVERSE_TOL:
                break
            J = central_jacobian(lambda z: self.pol.coordinates(b, L.point(b, z)), q, H_FD)
            q = q - np.linalg.solve(J, r[..., None])[..., 0]
        return q

    def inverse(self, b, y):
        """``phi_b^{-1}(y) = (q, a)`` by Gauss-Newton on the covector."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        q = self.leaf_foot(b, y)
        a = np.zeros_like(q)
        for _ in range(50):
            r = self.forward(b, q, a, check_domain=False) - y
            if np.max(np.abs(r)) < INVERSE_TOL:
                break
            qs = np.tile(q, (2 * self.n, 1))
            J = central_jacobian(lambda z: self.forward(b, qs, z, check_domain=False), a, H_FD)
            JtJ = np.einsum("mki,mkj->mij", J, J)
            a = a - np.linalg.solve(JtJ, np.einsum("mki,mk->mi", J, r)[..., None])[..., 0]
        return q, a

    def manifest(self):
        return {"model": self.model.manifest(), "lambda": self.provenance, "radius": self.radius,
                "h": self.h, "polarisation": self.pol.name}


def build_chart(model, L, lam, pol, h=1e-3, check=True, per_axis=6):
    """Build a :class:`WeinsteinChart` after checking its preconditions.

    Checks that ``lam`` vanishes on ``L``, that the polarisation passes the
    leaf checks at points of ``L`` and, for ``n >= 2``, that the leaf flows
    commute to within ``1e-5``.
    """
    n = model.n
    q = torus_points(n, per_axis)
    diag = {}
    if check:
        Y = liouville_field(model, lam)
        on_L = max(float(np.max(np.abs(lam(b, L.point(b, q))))) for b in model.base.samples)
        if on_L > 1e-10:
            raise PolarisationError(f"lambda does not vanish on L (sup {on_L:.3e})")
        leaf = transverse_leaf(model, pol, lam, Y, model.base.samples[0], L.point(model.base.samples[0], q[:4]))
        diag.update(lambda_on_L=on_L, leaf=leaf.residuals)
    # domain radius: half the tube over the largest leaf-flow speed
    speeds = []
    # the chart may be evaluated between base samples: sweep a dense base grid too
    if model.base.topology == "circle":
        sweep = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    else:
        sweep = np.linspace(model.base.samples[0], model.base.samples[-1], 64)
    for b in np.concatenate([model.base.samples, sweep]):
        pts = L.point(b, q)
        for s in (-0.5, 0.0, 0.5):
            shifted = pts.copy()
            shifted[:, n:] += s * model.r_max
            for i in range(n):
                X = leaf_flow_field(model, pol, b, shifted, i)
                speeds.append(np.max(np.abs(X)))
    radius = 0.5 * model.r_max / max(speeds)
    steps = max(int(np.ceil(radius / h)), 1)
    chart = WeinsteinChart(model, L, lam, pol, h, radius, steps, diagnostics=diag)
    if check and n >= 2:
        rng = np.random.default_rng(0)
        a = rng.uniform(-0.8 * radius, 0.8 * radius, (q.shape[0], n))
        b0 = model.base.samples[0]
        one = chart.forward(b0, q, a)
        other = chart.forward(b0, q, a, order=list(reversed(range(n))))
        defect = float(np.max(np.abs(one - other)))
        diag["commutation_defect"] = defect
        if defect > COMMUTE_TOL:
            raise PolarisationError(f"leaf flows do not commute (defect {defect:.3e})")
    return chart


def canonical_matrix(n):
    Z, I = np.zeros((n, n)), np.eye(n)
    return np.block([[Z, I], [-I, Z]])


def verify_symplectic(chart, b, n_probe=100, h_fd=H_FD, seed=0):
    """Compare ``phi_b^* omega_b`` with ``sum dq ^ dp`` at random domain points."""
    rng = np.random.default_rng(seed)
    n = chart.n
    q = rng.uniform(0, 2 * np.pi, (n_probe, n))
    a = rng.uniform(-0.95 * chart.radius, 0.95 * chart.radius, (n_probe, n))
    z = np.concatenate([q, a], axis=1)
    J = central_jacobian(lambda w: chart.forward(b, w[:, :n], w[:, n:]), z, h_fd)
    Om = chart.model.omega_matrix(b, chart.forward(b, q, a))
    pulled = np.einsum("mai,mab,mbj->mij", J, Om, J)
    defect = float(np.max(np.abs(pulled - canonical_matrix(n))))
    zero = chart.forward(b, q, np.zeros_like(a))
    return {
        "b": float(b),
        "n_probe": n_probe,
        "symplectic_defect": defect,
        "zero_section_defect": float(np.max(np.abs(chart.L.offset(b, zero)))),
        "fibre_drift": 0.0,
    }


def subbundle_to_form(chart, L_near, check_per_axis=8, check_points=None):
    """Fibred 1-form ``alpha`` on ``L_0`` whose graph the chart sends onto ``L_near``.

    The chart-image check runs on ``check_points`` (default: a torus grid
    with ``check_per_axis`` points per axis); pass a neighbourhood when
    ``L_near`` is only a local graph.

    Raises:
        ChartDomainError: ``L_near`` leaves the chart image; lists base sample indices.
    """
    n = chart.n

    def func(b, q):
        q_near = _solve_foot(chart, L_near, b, q)
        _, a = chart.inverse(b, L_near.point(b, q_near))
        return a

    alpha = FieldForm(1, n, func)
    q = torus_points(n, check_per_axis) if check_points is None else check_points
    bad = [i for i, b in enumerate(chart.model.base.samples)
           if np.max(np.abs(func(b, q))) > chart.radius]
    if bad:
        raise ChartDomainError(f"subbundle leaves the chart over base samples {bad}", bad)
    return alpha


def _solve_foot(chart, L_near, b, q):
    """``q'`` with ``leaf coordinate of L_near(q') = q``."""
    qn = np.array(q, dtype=float)
    for _ in range(50):
        r = np.asarray(chart.pol.coordinates(b, L_near.point(b, qn))) - q
        if np.max(np.abs(r)) < INVERSE_TOL:
            break
        J = central_jacobian(lambda z: chart.pol.coordinates(b, L_near.point(b, z)), qn, H_FD)
        qn = qn - np.linalg.solve(J, r[..., None])[..., 0]
    return qn


def roundtrip_defect(chart, L_near, alpha, per_axis=8):
    """Sup distance between ``phi(q, alpha(q))`` and ``L_near``."""
    q = torus_points(chart.n, per_axis)
    worst = 0.0
    for b in chart.model.base.samples:
        y = chart.forward(b, q, alpha(b, q))
        worst = max(worst, float(np.max(np.abs(L_near.offset(b, y)))))
    return worst


@dataclass(frozen=True)
class Verdict:
    lagrangian: bool
    defect: float

    def as_dict(self):
        return {"lagrangian": self.lagrangian, "defect": self.defect}


def is_lagrangian(alpha, tol=1e-6, base_points=(0.0,), fibre_points=None):
    """Closedness test ``|d alpha| < tol`` for a fibred 1-form on ``L_0``.

    Field forms are sampled at ``fibre_points`` (default: a 16-per-axis torus
    grid) over ``base_points``; cochain forms use cell densities.
    """
    if alpha.degree != 1:
        raise ValueError("the classifier expects a 1-form")
    if alpha.backend == "cochain":
        if alpha.complex.dim == 1:
            return Verdict(True, 0.0)
        defect = fibred_d(alpha).sup_norm()
        return Verdict(defect < tol, defect)
    if alpha.dim == 1:
        return Verdict(True, 0.0)
    pts = torus_points(alpha.dim, 16) if fibre_points is None else fibre_points
    defect = sup_on(fibred_d(alpha), base_points, pts)
    return Verdict(defect < tol, defect)


def lagrangianize(D, alpha, tol=1e-6):
    """Closed part of a sampled graph form: the nearest Lagrangian in the chart."""
    if alpha.backend != "cochain":
        raise BackendError("lagrangianize needs a cochain-sampled form")
    closed, _ = project_closed(D, alpha)
    verdict = is_lagrangian(closed, tol)
    if not verdict.lagrangian:
        raise PolarisationError(f"projection left a defect of {verdict.defect:.3e}")
    return closed
