"""Vertical retractions onto a subbundle and the fibred homotopy operator.

For a retraction ``rho_t`` with ``rho_0 = id``, ``rho_1(U) = L`` and
``rho_t|_L = id`` the operator

    (P beta)_x(v_1..v_{k-1}) = int_0^1 beta_{rho_t x}(d_t rho_t x, D rho_t v_1, ..., D rho_t v_{k-1}) dt

satisfies ``rho_1^* beta - beta = P d beta + d P beta`` and vanishes on ``L``.
Applied to the symplectic form it yields the Liouville form ``-P omega``.
"""
from dataclasses import dataclass

import numpy as np

from . import exterior as ext
from .errors import DegreeError, DomainError, NotLagrangianError
from .fibred_forms import H_FD, FieldForm, VerticalMap, fibred_d, pullback
from .models import LAGRANGIAN_TOL

IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class HomotopyConfig:
    """Gauss-Legendre node count on ``[0, 1]`` and the finite-difference step of ``d P``."""

    nodes: int = 12
    fd_step: float = H_FD

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least 2 quadrature nodes")

    def rule(self):
        g, w = np.polynomial.legendre.leggauss(self.nodes)
        return 0.5 * (g + 1), 0.5 * w


@dataclass(frozen=True, eq=False)
class VerticalRetraction:
    """Fibre-preserving deformation retraction ``rho(t, b, x)`` onto ``L``.

    Attributes:
        dim: fibre dimension.
        func: ``func(t, b, x)`` -> points over the same ``b``; ``t`` is a
            scalar or an array with one time per point.
        dt: ``dt(t, b, x)`` -> time derivative ``(M, dim)``.
        jac: ``jac(t, b, x)`` -> spatial Jacobian ``(M, dim, dim)``.
        in_domain: ``in_domain(b, x)`` -> boolean mask of the tubular domain.
        subbundle: the target ``L`` (anything with ``contains(b, x)``).
    """

    dim: int
    func: object
    dt: object
    jac: object
    in_domain: object
    subbundle: object = None
    fixes_L: bool = True
    ends_on_L: bool = True

    def at(self, t):
        """``rho_t`` as a :class:`VerticalMap`."""
        return VerticalMap(self.dim, lambda b, x: self.func(t, b, x), lambda b, x: self.jac(t, b, x))

    def check_domain(self, b, x):
        ok = self.in_domain(b, x)
        if not np.all(ok):
            raise DomainError(f"{int(np.sum(~ok))} point(s) outside the tubular domain")

    def invariants(self, b, x, on_L):
        """Sup defects of ``rho_0 = id``, ``rho_t|_L = id`` and ``rho_1(U) in L``."""
        ts = np.linspace(0, 1, 5)
        out = {"rho0_identity": float(np.max(np.abs(self.func(0.0, b, x) - x)))}
        out["fixes_L"] = max(float(np.max(np.abs(self.func(t, b, on_L) - on_L))) for t in ts)
        if self.subbundle is not None:
            out["ends_on_L"] = float(np.max(np.abs(self.subbundle.offset(b, self.func(1.0, b, x)))))
        return out


def _column(t):
    t = np.asarray(t, dtype=float)
    return t.reshape(-1, 1) if t.ndim else t


def linear_retraction(model, L):
    """Graph-offset dilation ``rho_t(q, p) = (q, g(q) + (1 - t)(p - g(q)))`` for ``L = {p = g(q)}``."""
    n, g = model.n, L.alpha0

    def func(t, b, x):
        t = _column(t)
        base = g(b, x[:, :n])
        return np.concatenate([x[:, :n], base + (1 - t) * (x[:, n:] - base)], axis=1)

    def dt(t, b, x):
        return np.concatenate([np.zeros((x.shape[0], n)), -(x[:, n:] - g(b, x[:, :n]))], axis=1)

    def jac(t, b, x):
        t = _column(t)[..., None]
        M = x.shape[0]
        J = np.zeros((M, 2 * n, 2 * n))
        J[:, :n, :n] = np.eye(n)
        J[:, n:, :n] = t * g.partials(b, x[:, :n])
        J[:, n:, n:] = (1 - t) * np.eye(n)
        return J

    def in_domain(b, x):
        return np.max(np.abs(L.offset(b, x)), axis=1) < model.r_max

    return VerticalRetraction(2 * n, func, dt, jac, in_domain, L)


def homotopy_P(beta, rho, cfg=HomotopyConfig()):
    """Homotopy operator ``P`` lowering the degree by one (field backend, ``k >= 1``)."""
    k, n = beta.degree, beta.dim
    if k < 1:
        raise DegreeError("the homotopy operator is defined for degree >= 1")
    if getattr(beta, "backend", "field") != "field":
        raise DegreeError("homotopy_P acts on field forms")
    ts, ws = cfg.rule()

    def func(b, x):
        rho.check_domain(b, x)
        M = x.shape[0]
        # all quadrature nodes in one batch: row j*M + m is (t_j, x_m)
        X = np.tile(x, (ts.size, 1))
        T = np.repeat(ts, M)
        inner = ext.contract(rho.dt(T, b, X), beta(b, rho.func(T, b, X)), n, k)
        vals = ext.pull(inner, rho.jac(T, b, X), k - 1).reshape(ts.size, M, -1)
        total = np.tensordot(ws, vals, axes=1)
        if not np.all(np.isfinite(total)):
            raise DomainError("homotopy integral produced non-finite values")
        return total

    return FieldForm(k - 1, n, func, fd_step=cfg.fd_step)


def homotopy_residual(beta, rho, base_points, fibre_points, cfg=HomotopyConfig()):
    """Sup of ``rho_1^* beta - beta - (P d beta + d P beta)`` over the sample set."""
    k, n = beta.degree, beta.dim
    lhs = pullback(rho.at(1.0), beta) - beta
    rhs = fibred_d(homotopy_P(beta, rho, cfg)) if k >= 1 else None
    if k < n:
        dP = homotopy_P(fibred_d(beta), rho, cfg)
        rhs = dP if rhs is None else rhs + dP
    diff = lhs - rhs
    return max(float(np.max(np.abs(diff(b, fibre_points)))) for b in np.atleast_1d(base_points))


def tubular_points(model, L, per_axis=6, shrink=0.8, b=None):
    """Fibre points ``L(q) + s`` with ``|s| <= shrink * r_max`` around the graph."""
    n = model.n
    q = L.q_points(per_axis)
    s = np.linspace(-shrink * model.r_max, shrink * model.r_max, per_axis)
    S = np.stack([a.ravel() for a in np.meshgrid(*([s] * n), indexing="ij")], axis=1)
    b = model.base.samples[0] if b is None else b
    onL = L.point(b, q)
    pts = (onL[:, None, :] + np.concatenate([np.zeros((S.shape[0], n)), S], axis=1)[None]).reshape(-1, 2 * n)
    return pts, onL


def liouville_from_symplectic(model, L, rho=None, cfg=HomotopyConfig()):
    """Fibred Liouville form ``lambda = -P omega`` vanishing on a Lagrangian ``L``.

    Raises:
        NotLagrangianError: if ``omega`` pulled back to ``L`` exceeds ``1e-8``.
    """
    if L.defect > LAGRANGIAN_TOL:
        raise NotLagrangianError(f"subbundle is not Lagrangian (omega|_L up to {L.defect:.3e})", L.defect)
    rho = linear_retraction(model, L) if rho is None else rho
    return -homotopy_P(model.omega, rho, cfg)


def liouville_report(model, L, lam, per_axis=6):
    """Residuals ``|d lambda - omega|`` on the tube and ``|lambda|`` on ``L``."""
    closed, on_L = 0.0, 0.0
    d_lam = fibred_d(lam)
    for b in model.base.samples:
        pts, onL = tubular_points(model, L, per_axis, b=b)
        closed = max(closed, float(np.max(np.abs(d_lam(b, pts) - model.omega(b, pts)))))
        on_L = max(on_L, float(np.max(np.abs(lam(b, onL)))))
    return {"closedness_defect": closed, "vanishing_on_L": on_L}
