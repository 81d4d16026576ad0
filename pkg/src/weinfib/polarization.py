"""Liouville vector fields, their linearization along ``L`` and transverse polarisations.

Sign convention: the Liouville field solves ``omega(Y, .) = lambda``; then
``Y`` vanishes on ``L``, its Jacobian along ``L`` has eigenvalue 0 on
``T L`` and 1 on a transverse Lagrangian plane, and the flow of ``-Y``
scales ``omega`` by ``e^{-t}``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PolarisationError, SpectrumError
from .fibred_forms import H_FD, VerticalField
from .integrators import rk4_flow

SOLVE_TOL = 1e-9
CLUSTER_TOL = 1e-6
CLUSTER_REJECT = 1e-3
ISOTROPY_TOL = 1e-8
LEAF_TOL = 1e-8
INVARIANCE_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LiouvilleField:
    """Vertical field ``Y`` with ``omega(Y, .) = lambda`` and its provenance ``lam``."""

    Y: VerticalField
    lam: object
    model: object

    def __call__(self, b, x):
        return self.Y(b, x)

    def jacobian(self, b, x):
        return self.Y.jacobian(b, x)

    def residual(self, b, x):
        """Sup of ``omega(Y, .) - lambda`` at the given points."""
        Om = self.model.omega_matrix(b, x)
        got = np.einsum("mi,mij->mj", self.Y(b, x), Om)
        return float(np.max(np.abs(got - self.lam(b, x))))


def liouville_field(model, lam, fd_step=H_FD):
    """Solve ``omega_b(Y, .) = lambda_b`` pointwise."""
    def func(b, x):
        Om = model.omega_matrix(b, x)
        det = np.linalg.det(Om)
        if np.any(np.abs(det) <= 1e-10):
            raise ConfigurationError("omega is degenerate at a sample point")
        return np.linalg.solve(np.swapaxes(Om, 1, 2), lam(b, x)[..., None])[..., 0]

    return LiouvilleField(VerticalField(model.dim, func, fd_step=fd_step), lam, model)


def _null_space(A, k):
    _, _, Vt = np.linalg.svd(A)
    return Vt[-k:].T


@dataclass
class EigenSplit:
    """Eigenspace split of ``J = DY`` at a point ``x`` of ``L``.

    ``E0`` and ``E1`` hold basis columns; ``residuals`` has the sup defects
    of ``J E0 = 0``, ``J E1 = E1``, isotropy of ``E1`` and, when ``L`` is
    known, the distance between ``E0`` and ``T_x L``.
    """

    x: np.ndarray
    J: np.ndarray
    eigenvalues: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    residuals: dict


def _projector(basis):
    Q, _ = np.linalg.qr(basis)
    return Q @ Q.T


def jacobian_split(field, b, x, L=None, q=None):
    """Split ``T_x X_b`` into the 0- and 1-eigenspaces of ``J = DY`` for points on ``L``.

    Args:
        field: :class:`LiouvilleField`.
        b: base value.
        x: points ``(M, 2n)`` on ``L``.
        L: optional subbundle to compare ``E0`` with ``T L``; ``q`` are the
            graph coordinates of ``x`` (default: the first ``n`` coordinates).

    Raises:
        SpectrumError: an eigenvalue lies farther than ``1e-3`` from {0, 1}.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = x.shape[1]
    n = dim // 2
    if L is not None:
        off = np.max(np.abs(L.offset(b, x)))
        if off > 1e-8:
            raise ConfigurationError(f"points are not on L (offset {off:.3e})")
        q = x[:, :n] if q is None else q
    Js = field.jacobian(b, x)
    Om = field.model.omega_matrix(b, x)
    TL = L.tangent(b, q) if L is not None else None
    out = []
    for m in range(x.shape[0]):
        J = Js[m]
        ev = np.linalg.eigvals(J)
        dist = np.minimum(np.abs(ev), np.abs(ev - 1))
        if np.max(dist) > CLUSTER_REJECT:
            raise SpectrumError(f"eigenvalues {np.round(ev, 6)} do not cluster at 0 and 1")
        if np.sum(np.abs(ev) < 0.5) != n:
            raise SpectrumError("eigenvalue multiplicities are not (n, n)")
        E0 = _null_space(J, n)
        E1 = _null_space(J - np.eye(dim), n)
        res = {
            "eigenvalue_deviation": float(np.max(dist)),
            "E0": float(np.max(np.abs(J @ E0))),
            "E1": float(np.max(np.abs(J @ E1 - E1))),
            "E1_isotropy": float(np.max(np.abs(E1.T @ Om[m] @ E1))),
        }
        if TL is not None:
            res["E0_vs_TL"] = float(np.max(np.abs(_projector(E0) - _projector(TL[m]))))
        out.append(EigenSplit(x[m], J, ev, E0, E1, res))
    return out


def split_summary(splits):
    keys = splits[0].residuals.keys()
    return {k: max(s.residuals[k] for s in splits) for k in keys}


def conformal_check(model, field, b, x, t_max=1.0, h=1e-3, n_times=4, domain=None, pairs=None):
    """Flow ``-Y`` with RK4 and compare ``(phi^{-t})^* omega`` with ``e^{-t} omega``.

    Returns a report with a ``table`` of ``(t, residual)`` rows, the sup
    ``residual`` and ``pushed``: for each ``t`` the largest
    ``|omega(D phi Z1, D phi Z2)|`` over the ``pairs`` of test vectors
    (``(P, 2, 2n)``, default: all pairs of coordinate vectors).

    Raises:
        DomainError: a trajectory leaves ``domain`` (a mask callable).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    M, dim = x.shape
    if pairs is None:
        E = np.eye(dim)
        pairs = np.array([[E[i], E[j]] for i in range(dim) for j in range(i + 1, dim)])
    pairs = np.asarray(pairs, dtype=float)
    Z1, Z2 = pairs[:, 0], pairs[:, 1]
    om0 = np.einsum("pi,mij,pj->mp", Z1, model.omega_matrix(b, x), Z2)
    neg = -field.Y
    times = np.linspace(0.0, t_max, n_times + 1)
    y, D = x.copy(), np.broadcast_to(np.eye(dim), (M, dim, dim)).copy()
    table, pushed = [], []
    for i, t in enumerate(times):
        if i:
            dt = t - times[i - 1]
            steps = max(int(np.ceil(dt / h)), 1)
            y, Dseg = rk4_flow(lambda z: neg(b, z), y, dt, steps, jac=lambda z: neg.jacobian(b, z))
            D = Dseg @ D
            if not np.all(np.isfinite(y)) or (domain is not None and not np.all(domain(b, y))):
                raise DomainError(f"flow of -Y left the domain before t = {t}")
        Om = model.omega_matrix(b, y)
        u, v = np.einsum("mij,pj->mpi", D, Z1), np.einsum("mij,pj->mpi", D, Z2)
        val = np.einsum("mpi,mij,mpj->mp", u, Om, v)
        table.append((float(t), float(np.max(np.abs(val - np.exp(-t) * om0)))))
        pushed.append((float(t), float(np.max(np.abs(val)))))
    return {"table": table, "residual": max(r for _, r in table), "pushed": pushed, "h": h}


@dataclass
class LeafReport:
    points: np.ndarray
    tangents: np.ndarray
    residuals: dict


def transverse_leaf(model, pol, lam, field, b, x, s=None, check=True):
    """Leaf of the declared polarisation through ``x`` with its four checks.

    Checks: tangent to ``ker lambda``; vertical (exact, leaves are parametrized
    inside one fibre); Lagrangian; ``Y`` tangent to the leaf.

    Raises:
        PolarisationError: when ``check`` is set and a check fails.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = model.n
    if s is None:
        grid = np.linspace(-0.5, 0.5, 5) * model.r_max
        s = np.stack([a.ravel() for a in np.meshgrid(*([grid] * n), indexing="ij")], axis=1)
    pts = np.concatenate([pol.leaf(b, x0[None], s) for x0 in x])
    T = np.asarray(pol.tangent(b, pts))
    Om = model.omega_matrix(b, pts)
    lam_t = np.einsum("mi,mik->mk", lam(b, pts), T)
    lag = np.einsum("mik,mij,mjl->mkl", T, Om, T)
    Yv = field(b, pts)
    gram = np.einsum("mik,mil->mkl", T, T)
    coef = np.linalg.solve(gram, np.einsum("mik,mi->mk", T, Yv)[..., None])[..., 0]
    perp = Yv - np.einsum("mik,mk->mi", T, coef)
    res = {
        "ker_lambda": float(np.max(np.abs(lam_t))),
        "vertical": 0.0,
        "lagrangian": float(np.max(np.abs(lag))),
        "Y_invariance": float(np.max(np.abs(perp))),
    }
    if check:
        bad = [k for k, tol in (("ker_lambda", LEAF_TOL), ("lagrangian", LEAF_TOL),
                                ("Y_invariance", INVARIANCE_TOL)) if res[k] > tol]
        if bad:
            raise PolarisationError(f"polarisation fails {bad}: {res}")
    return LeafReport(pts, T, res)


def leaf_vs_E1(pol, splits, b):
    """Distance between the leaf tangent and ``E1`` at points of ``L``."""
    worst = 0.0
    for sp in splits:
        T = np.asarray(pol.tangent(b, sp.x[None]))[0]
        worst = max(worst, float(np.max(np.abs(_projector(T) - _projector(sp.E1)))))
    return worst
