"""Fibrations ``pi: M -> B``, their graphs ``L_pi`` in ``M x B`` and the bi-fibration map ``Psi``.

``pi`` is a subbundle-producing map when it is a submersion; it is a
Lagrangian fibration when in addition every fibre ``pi^{-1}(b)`` is
Lagrangian.  On a bi-fibration ``p_1, p_2: N -> L`` with common section
``iota_L`` a section ``alpha`` of ``p_1`` is turned into the section
``Psi(alpha) = alpha o (p_2 o alpha)^{-1}`` of ``p_2`` with the same graph.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize

from .errors import ConfigurationError, InversionError, RankError
from .fibred_forms import FieldForm, torus_points
from .integrators import central_jacobian

SIGMA_MIN = 1e-6
ISOTROPY_TOL = 1e-8
IDENTITY_TOL = 1e-12
NEWTON_TOL = 1e-10
NEWTON_MAXITER = 50
TWO_PI = 2 * np.pi


def _wrap(d):
    return (d + np.pi) % TWO_PI - np.pi


@dataclass(frozen=True, eq=False)
class FibrationMap:
    """Smooth map ``pi`` from the torus ``M`` to ``B``.

    Attributes:
        func: ``(K, dim_M) -> (K, dim_B)``.
        dim_M, dim_B: dimensions.
        jac: optional exact differential ``(K, dim_B, dim_M)``.
        periodic_B: per-axis flags for wrapping residuals in ``B``.
        name: label used in reports.
    """

    func: object
    dim_M: int
    dim_B: int
    jac: object = None
    periodic_B: tuple = None
    fd_step: float = 1e-6
    name: str = "pi"

    def __call__(self, x):
        return np.asarray(self.func(np.atleast_2d(x)), dtype=float).reshape(-1, self.dim_B)

    def differential(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.jac is not None:
            return np.asarray(self.jac(x), dtype=float)
        return central_jacobian(self, x, self.fd_step)

    def residual(self, x, b):
        d = self(x) - b
        per = self.periodic_B if self.periodic_B is not None else (True,) * self.dim_B
        return np.where(per, _wrap(d), d)

    def samples(self, per_axis=32):
        return torus_points(self.dim_M, per_axis)


def projection_map(axes, dim_M, periodic_B=None, name=None):
    """Coordinate projection ``x -> x[axes]`` with its exact differential."""
    axes = list(axes)
    J = np.eye(dim_M)[axes]
    return FibrationMap(lambda x: x[:, axes], dim_M, len(axes), lambda x: np.broadcast_to(J, (x.shape[0],) + J.shape),
                        periodic_B, name=name or f"proj{tuple(axes)}")


@dataclass
class SubmersionReport:
    passed: bool
    sigma_min: float
    failures: np.ndarray
    refined: list = field(default_factory=list)

    def as_dict(self):
        return {"passed": self.passed, "sigma_min": self.sigma_min,
                "failures": np.asarray(self.failures).tolist(), "refined": self.refined}


def _sigma(pi, x):
    return np.linalg.svd(pi.differential(x), compute_uv=False)[:, -1]


def submersion_test(pi, points=None, per_axis=32, sigma_min=SIGMA_MIN, refine=5):
    """Smallest singular value of ``D pi`` at every sample, with local refinement.

    The ``refine`` samples with the smallest singular values seed a
    Nelder-Mead search, so rank drops between grid points are still found.
    """
    x = pi.samples(per_axis) if points is None else np.atleast_2d(points)
    s = _sigma(pi, x)
    refined = []
    for i in np.argsort(s)[:refine]:
        res = minimize(lambda z: float(_sigma(pi, z[None])[0]), x[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
        refined.append((res.x.tolist(), float(res.fun)))
    low = s < sigma_min
    failures = x[low]
    extra = [p for p, v in refined if v < sigma_min]
    if extra and not low.any():
        failures = np.array(extra)
    smallest = min([float(s.min())] + [v for _, v in refined])
    return SubmersionReport(bool(smallest >= sigma_min), smallest, failures, refined)


@dataclass
class GraphData:
    """``L_pi = {(m, pi(m))}`` with its fibres ``pi^{-1}(b) x {b}``."""

    pi: FibrationMap
    is_subbundle: bool
    submersion: SubmersionReport
    fibres: dict

    def point(self, x):
        x = np.atleast_2d(x)
        return np.concatenate([x, self.pi(x)], axis=1)

    def as_dict(self):
        return {"map": self.pi.name, "is_subbundle": self.is_subbundle,
                "submersion": self.submersion.as_dict(),
                "fibre_residuals": {str(k): float(np.max(np.abs(self.pi.residual(v[:, :self.pi.dim_M], np.array(k)))))
                                    for k, v in self.fibres.items()}}


def fibre_points(pi, b, seeds, iters=100, tol=1e-12):
    """Project ``seeds`` onto ``pi^{-1}(b)`` by minimal-norm Gauss-Newton steps."""
    x = np.array(seeds, dtype=float)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    for _ in range(iters):
        r = pi.residual(x, b)
        if np.max(np.abs(r)) < tol:
            break
        step = np.einsum("mij,mj->mi", np.linalg.pinv(pi.differential(x)), r)
        # damped: full steps can cycle across the wrap of a periodic base
        scale = np.minimum(1.0, 0.5 / np.maximum(np.max(np.abs(step), axis=1, keepdims=True), 1e-300))
        x = x - scale * step
    return x


def graph_of(pi, base_points=None, per_axis=32, seeds_per_axis=8):
    """Graph ``L_pi`` in ``M x B``; fibres are computed when ``pi`` is a submersion."""
    rep = submersion_test(pi, per_axis=per_axis)
    fibres = {}
    if rep.passed:
        if base_points is None:
            base_points = torus_points(pi.dim_B, 4)
        seeds = torus_points(pi.dim_M, seeds_per_axis)
        for b in np.atleast_2d(base_points):
            x = fibre_points(pi, b, seeds)
            fibres[tuple(float(v) for v in b)] = np.concatenate([x, np.broadcast_to(b, (x.shape[0], b.size))], axis=1)
    return GraphData(pi, rep.passed, rep, fibres)


@dataclass
class FibrationVerdict:
    lagrangian: bool
    defect: float
    kernel_dim: int

    def as_dict(self):
        return {"lagrangian": self.lagrangian, "defect": self.defect, "kernel_dim": self.kernel_dim}


def kernel_basis(pi, x):
    """Orthonormal bases ``(K, dim_M, dim_M - dim_B)`` of ``ker D pi``.

    Raises:
        RankError: ``D pi`` is rank-deficient at some sample.
    """
    J = pi.differential(x)
    _, s, Vt = np.linalg.svd(J)
    if np.any(s[:, -1] < SIGMA_MIN):
        raise RankError("differential is rank-deficient; the kernel dimension is not constant")
    return np.swapaxes(Vt[:, pi.dim_B:, :], 1, 2)


def lagrangian_fibration_test(omega_matrix, pi, points=None, per_axis=8, tol=ISOTROPY_TOL):
    """Isotropy of ``ker D pi`` for ``omega_matrix(x) -> (K, dim_M, dim_M)``."""
    x = pi.samples(per_axis) if points is None else np.atleast_2d(points)
    V = kernel_basis(pi, x)
    k = V.shape[2]
    defect = float(np.max(np.abs(np.einsum("mik,mij,mjl->mkl", V, omega_matrix(x), V))))
    return FibrationVerdict(bool(defect <= tol and 2 * k == pi.dim_M), defect, k)


# ---------------------------------------------------------------- weinstein consistency


def shear(T):
    """Linear symplectic shear ``(q, p) -> (q + T p, p)`` for symmetric ``T``."""
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    return np.block([[np.eye(n), T], [np.zeros((n, n)), np.eye(n)]])


def fibre_graph_slope(V, T):
    """Slope ``S`` of the plane ``shear(T) span(V)`` written as a graph ``p = S q``."""
    n = V.shape[0] // 2
    W = shear(T) @ V
    Q, P = W[:n], W[n:]
    if abs(np.linalg.det(Q)) < 1e-8:
        raise RankError("sheared fibre is not a graph over the q-plane; choose another shear")
    return P @ np.linalg.inv(Q)


def weinstein_fibre_verdict(pi, points=None, per_axis=4, T=((1.0, 1.0), (1.0, 2.0)), box=0.1, tol=ISOTROPY_TOL):
    """Classify the fibres of ``pi`` with the Weinstein chart classifier.

    Each fibre tangent plane ``ker D pi`` of ``M = T^{2n}`` (standard ``omega``)
    is moved by a unimodular symplectic shear into a graph ``p = S (q - q0)``
    over the zero section.  That graph is turned into a 1-form by a chart
    built on the standard ``T^{2n}`` model and passed to ``is_lagrangian``.
    """
    from . import models, poincare, weinstein

    n = pi.dim_M // 2
    if pi.dim_M != 4:
        raise ConfigurationError("the consistency check is set up for M = T^4")
    T = np.asarray(T, dtype=float)
    x = pi.samples(per_axis) if points is None else np.atleast_2d(points)
    V = kernel_basis(pi, x)
    if V.shape[2] != n:
        return FibrationVerdict(False, float("inf"), V.shape[2])
    model = models.torus4(0.0, base_samples=1)
    L = model.zero_section()
    lam = poincare.liouville_from_symplectic(model, L)
    chart = weinstein.build_chart(model, L, lam, model.polarisation(), check=False)
    g = np.linspace(-box, box, 3)
    local = np.stack([a.ravel() for a in np.meshgrid(g, g, indexing="ij")], axis=1)
    slopes = {}
    for m in range(x.shape[0]):
        S = fibre_graph_slope(V[m], T)
        slopes.setdefault(np.round(S, 12).tobytes(), S)
    worst = 0.0
    for S in slopes.values():
        form = FieldForm(1, n, lambda b, q, S=S: q @ S.T,
                         lambda b, q, S=S: np.broadcast_to(S, (q.shape[0], n, n)))
        near = model.graph(form)
        # keep |S (q - q0)| inside the chart for steep fibres
        pts = local * min(1.0, 0.8 * chart.radius / (box * max(np.abs(S).sum(axis=1).max(), 1e-300)))
        alpha = weinstein.subbundle_to_form(chart, near, check_points=pts)
        v = weinstein.is_lagrangian(alpha, tol, base_points=[0.0], fibre_points=pts)
        worst = max(worst, v.defect)
    return FibrationVerdict(bool(worst < tol), worst, n)


# ---------------------------------------------------------------- bi-fibrations and Psi


def invert_circle_map(A, y, tol=NEWTON_TOL, max_iter=NEWTON_MAXITER, dA=None, check_points=2048):
    """Solve ``A(x) = y`` for a lift ``A`` of a degree-one circle map.

    Newton on the lift, with a Brent bracketing fallback for nodes where
    Newton stalls.  ``A`` must be strictly increasing (checked on a dense
    grid).

    Returns:
        ``(x, iterations)``.

    Raises:
        InversionError: ``A`` is not an orientation-preserving diffeomorphism.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    grid = np.linspace(0, TWO_PI, check_points + 1)
    vals = A(grid)
    if np.any(np.diff(vals) <= 0) or abs(vals[-1] - vals[0] - TWO_PI) > 1e-9:
        raise InversionError("map is not a monotone degree-one circle map; alpha is outside V_1")
    if dA is None:
        dA = lambda x: (A(x + 1e-6) - A(x - 1e-6)) / 2e-6
    shift = float(np.max(np.abs(vals - grid))) + 1e-6
    x = y - (A(y) - y)
    its = np.zeros(y.size, dtype=int)
    done = np.zeros(y.size, dtype=bool)
    for it in range(max_iter):
        r = A(x) - y
        done |= np.abs(r) < tol
        if done.all():
            break
        its[~done] = it + 1
        x = np.where(done, x, x - r / dA(x))
    for i in np.flatnonzero(np.abs(A(x) - y) >= tol):
        x[i] = brentq(lambda z: float(A(np.array([z]))[0] - y[i]), y[i] - shift, y[i] + shift, xtol=1e-14)
        its[i] = max_iter
    if np.max(np.abs(A(x) - y)) >= tol:
        raise InversionError("circle map inversion did not converge")
    return x, its


@dataclass(eq=False)
class CircleSection:
    """Section of ``p_which: N -> L = S^1`` stored as a periodic cubic spline.

    ``values`` are the lifts of ``alpha(x_j) - iota_L(x_j)`` at uniform nodes.
    """

    bifibration: object
    which: int
    values: np.ndarray

    def __post_init__(self):
        nodes = self.bifibration.nodes
        ext = np.concatenate([nodes, [TWO_PI]])
        vals = np.concatenate([self.values, self.values[:1]])
        self._spline = CubicSpline(ext, vals, bc_type="periodic")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.bifibration.iota(x) + self._spline(np.mod(x, TWO_PI))

    def base_map(self, other):
        """Lift of ``p_other o alpha`` and its derivative."""
        p = self.bifibration.projections[other]
        return (lambda x: p(self(x))), (lambda x: p(self.bifibration.iota_jac(x) + self._spline(np.mod(x, TWO_PI), 1)))


@dataclass(eq=False)
class BiFibration:
    """Two linear projections ``p_1, p_2: N -> S^1`` with a common section ``iota_L``.

    ``N`` is modelled by lifts in ``R^d``; ``iota`` is linear, ``x -> x v``.
    """

    direction: np.ndarray
    projections: tuple
    n_nodes: int = 256

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        self.nodes = np.linspace(0, TWO_PI, self.n_nodes, endpoint=False)
        for i, p in enumerate(self.projections):
            err = float(np.max(np.abs(p(self.iota(self.nodes)) - self.nodes)))
            if err > IDENTITY_TOL:
                raise ConfigurationError(f"p_{i + 1} o iota_L is not the identity (error {err:.3e})")

    def iota(self, x):
        return np.asarray(x, dtype=float)[..., None] * self.direction

    def iota_jac(self, x):
        return np.ones_like(np.asarray(x, dtype=float))[..., None] * self.direction

    @classmethod
    def torus(cls, n_nodes=256):
        """``N = S^1 x S^1`` with ``p_1(x, y) = x``, ``p_2(x, y) = y`` and the diagonal section."""
        return cls([1.0, 1.0], (lambda z: z[..., 0], lambda z: z[..., 1]), n_nodes)

    def section(self, which, func):
        """Sample ``func: L -> N`` (lifts, a section of ``p_which``) at the nodes."""
        vals = np.asarray(func(self.nodes), dtype=float) - self.iota(self.nodes)
        sec = CircleSection(self, which, vals)
        err = float(np.max(np.abs(self.projections[which](func(self.nodes)) - self.nodes)))
        if err > 1e-8:
            raise ConfigurationError(f"not a section of p_{which + 1} (error {err:.3e})")
        return sec

    def identity_section(self, which):
        return CircleSection(self, which, np.zeros((self.n_nodes, self.direction.size)))


@dataclass
class PsiReport:
    section: CircleSection
    section_defect: float
    graph_defect: float
    max_iterations: int

    def as_dict(self):
        return {"section_defect": self.section_defect, "graph_defect": self.graph_defect,
                "max_iterations": self.max_iterations}


def _reparametrize(sec, target):
    bf = sec.bifibration
    A, dA = sec.base_map(target)
    x, its = invert_circle_map(A, bf.nodes, dA=dA)
    pts = sec(x)
    out = CircleSection(bf, target, pts - bf.iota(bf.nodes))
    p = bf.projections[target]
    mid = bf.nodes + np.pi / bf.n_nodes
    section_defect = float(np.max(np.abs(p(out(mid)) - mid)))
    # distance of the new graph from the old one, measured through the old parametrization
    xm, _ = invert_circle_map(A, mid, dA=dA)
    graph_defect = float(np.max(np.abs(out(mid) - sec(xm))))
    return PsiReport(out, section_defect, graph_defect, int(its.max()))


def psi_reparametrize(sec):
    """``Psi(alpha) = alpha o (p_2 o alpha)^{-1}`` for a section ``alpha`` of ``p_1``."""
    if sec.which != 0:
        raise ConfigurationError("Psi acts on sections of p_1")
    return _reparametrize(sec, 1)


def psi_inverse(sec):
    """``Psi^{-1}(beta) = beta o (p_1 o beta)^{-1}`` for a section ``beta`` of ``p_2``."""
    if sec.which != 1:
        raise ConfigurationError("Psi^{-1} acts on sections of p_2")
    return _reparametrize(sec, 0)


def roundtrip_residual(sec, points=None):
    """Sup of ``Psi^{-1}(Psi(alpha)) - alpha`` at node midpoints (off-node interpolation)."""
    back = psi_inverse(psi_reparametrize(sec).section).section
    bf = sec.bifibration
    x = bf.nodes + np.pi / bf.n_nodes if points is None else points
    return float(np.max(np.abs(back(x) - sec(x))))


def invert_torus_map(F, y, x0=None, jac=None, tol=NEWTON_TOL, max_iter=NEWTON_MAXITER):
    """Damped Newton for ``F(x) = y`` on lifts of a torus map (small perturbations of the identity)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x = y.copy() if x0 is None else np.array(x0, dtype=float)
    jac = jac or (lambda z: central_jacobian(F, z, 1e-6))
    for _ in range(max_iter):
        r = F(x) - y
        err = np.max(np.abs(r), axis=1)
        if np.all(err < tol):
            return x
        step = np.linalg.solve(jac(x), r[..., None])[..., 0]
        t = np.ones((x.shape[0], 1))
        for _ in range(20):
            trial = x - t * step
            worse = np.max(np.abs(F(trial) - y), axis=1) > err
            if not worse.any():
                break
            t[worse] *= 0.5
        x = x - t * step
    raise InversionError("torus map inversion did not converge")
