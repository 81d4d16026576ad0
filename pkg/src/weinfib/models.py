"""Gallery of trivialized symplectic bundle models and Lagrangian subbundles.

Fibre coordinates are ordered ``x = (q_1..q_n, p_1..p_n)``: the ``q`` are
angles on the torus ``L_0 = {p = 0}`` and the ``p`` are momenta, periodic or
confined to a window ``|p| < r_max``.  Every model carries
``omega_b = c(b) f(p) sum_i dq_i ^ dp_i`` with ``c(b) = 1 + a sin b`` and
``f = 1 + kappa p^2`` (``kappa`` only for ``n = 1``).
"""
from dataclasses import dataclass, field

import numpy as np

from . import exterior as ext
from .errors import ConfigurationError, DegreeError
from .fibred_forms import FibreComplex, FieldForm, discretize, fibred_d, sup_on, torus_points
from .grids import BaseGrid

NONDEGENERACY_TOL = 1e-10
LAGRANGIAN_TOL = 1e-8


def _symplectic_pairs(n):
    sets = ext.index_sets(2 * n, 2)
    return [sets.index((i, n + i)) for i in range(n)]


@dataclass(frozen=True, eq=False)
class SymplecticBundleModel:
    """Trivial bundle ``B x F`` with a fibred symplectic form.

    Attributes:
        name: gallery name.
        n: half the fibre dimension.
        base: :class:`BaseGrid` of base samples.
        c_amplitude: ``a`` in ``c(b) = 1 + a sin b``.
        kappa: radial density coefficient (``n = 1`` only).
        periodic_momenta: momenta live on circles instead of a window.
        r_max: tubular radius of the momentum window.
        fibre_shape: resolution of the cochain discretization.
    """

    name: str
    n: int
    base: BaseGrid
    c_amplitude: float = 0.0
    kappa: float = 0.0
    periodic_momenta: bool = False
    r_max: float = 1.0
    fibre_shape: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kappa and self.n != 1:
            raise ConfigurationError("kappa density is only closed for n = 1")
        if abs(self.c_amplitude) >= 1:
            raise ConfigurationError("c(b) = 1 + a sin b must stay positive")

    @property
    def dim(self):
        return 2 * self.n

    @property
    def periodic(self):
        return (True,) * self.n + (self.periodic_momenta,) * self.n

    def c(self, b):
        return 1.0 + self.c_amplitude * np.sin(b)

    def density(self, x):
        if self.kappa:
            return 1.0 + self.kappa * x[:, 1] ** 2
        return np.ones(x.shape[0])

    @property
    def omega(self):
        n, pairs = self.n, _symplectic_pairs(self.n)
        C = ext.n_components(2 * n, 2)

        def func(b, x):
            out = np.zeros((x.shape[0], C))
            out[:, pairs] = (self.c(b) * self.density(x))[:, None]
            return out

        def deriv(b, x):
            out = np.zeros((x.shape[0], C, 2 * n))
            if self.kappa:
                out[:, pairs[0], 1] = self.c(b) * 2 * self.kappa * x[:, 1]
            return out

        return FieldForm(2, 2 * n, func, deriv)

    def omega_matrix(self, b, x):
        return ext.matrix_of_two_form(self.omega(b, x), self.dim)

    def fibre_complex(self, shape=None):
        shape = tuple(shape or self.fibre_shape or (16,) * self.dim)
        lengths = [2 * np.pi] * self.n + [2 * np.pi if self.periodic_momenta else 2 * self.r_max] * self.n
        origin = [0.0] * self.n + [0.0 if self.periodic_momenta else -self.r_max] * self.n
        return FibreComplex(shape, self.periodic, lengths, origin)

    def omega_cochain(self, shape=None, method="integrate"):
        return discretize(self.omega, self.fibre_complex(shape), self.base, method)

    def sample_points(self, per_axis=8, shrink=0.9):
        lo = [0.0] * self.n + ([0.0] if self.periodic_momenta else [-shrink * self.r_max]) * self.n
        lengths = [2 * np.pi] * self.n + [2 * np.pi if self.periodic_momenta else 2 * shrink * self.r_max] * self.n
        return torus_points(self.dim, per_axis, lengths, self.periodic, lo)

    def check(self, per_axis=6):
        """Closedness and nondegeneracy of ``omega`` at the sample points."""
        pts = self.sample_points(per_axis)
        closed = 0.0 if self.dim == 2 else sup_on(fibred_d(self.omega), self.base.samples, pts)
        dets = [np.min(np.abs(np.linalg.det(self.omega_matrix(b, pts)))) for b in self.base.samples]
        report = {"closedness_defect": closed, "min_abs_det": float(min(dets))}
        if closed > 1e-8 or report["min_abs_det"] <= NONDEGENERACY_TOL:
            raise ConfigurationError(f"model {self.name!r} is not symplectic: {report}")
        return report

    def zero_section(self):
        return LagrangianSubbundle(self, FieldForm.zeros(1, self.n))

    def graph(self, alpha0):
        return LagrangianSubbundle(self, alpha0)

    def polarisation(self):
        return momentum_polarisation(self.n)

    def manifest(self):
        return {"name": self.name, "n": self.n, "c_amplitude": self.c_amplitude, "kappa": self.kappa,
                "periodic_momenta": self.periodic_momenta, "r_max": self.r_max,
                "base_samples": int(self.base.size), "base_topology": self.base.topology}


class LagrangianSubbundle:
    """Subbundle ``L_b = {p = alpha0_b(q)}``: the graph of a fibred 1-form on ``L_0``.

    ``defect`` is the sup of ``omega`` pulled back to ``L`` over the check
    grid; ``certified`` is set when it is at most ``1e-8``.
    """

    def __init__(self, model, alpha0, check_per_axis=12):
        if alpha0.degree != 1 or alpha0.dim != model.n:
            raise DegreeError("graph data must be a 1-form on the n-torus L_0")
        self.model = model
        self.alpha0 = alpha0
        self.defect = self.omega_pullback_defect(check_per_axis)
        self.certified = self.defect <= LAGRANGIAN_TOL

    def q_points(self, per_axis=12):
        return torus_points(self.model.n, per_axis)

    def point(self, b, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return np.concatenate([q, self.alpha0(b, q)], axis=1)

    def tangent(self, b, q):
        """Columns span ``T L_b``: shape ``(M, 2n, n)``."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        n = self.model.n
        top = np.broadcast_to(np.eye(n), (q.shape[0], n, n))
        return np.concatenate([top, self.alpha0.partials(b, q)], axis=1)

    def offset(self, b, x):
        """Momentum displacement ``p - alpha0(q)`` of fibre points."""
        n = self.model.n
        return x[:, n:] - self.alpha0(b, x[:, :n])

    def contains(self, b, x, tol=1e-9):
        return np.max(np.abs(self.offset(b, x)), axis=1) <= tol

    def omega_pullback_defect(self, per_axis=12):
        n = self.model.n
        if n == 1:
            return 0.0
        q = self.q_points(per_axis)
        worst = 0.0
        for b in self.model.base.samples:
            T = self.tangent(b, q)
            Om = self.model.omega_matrix(b, self.point(b, q))
            pulled = np.einsum("mai,mab,mbj->mij", T, Om, T)
            worst = max(worst, float(np.max(np.abs(pulled))))
        return worst


@dataclass(frozen=True)
class PolarisationSpec:
    """Closed-form polarisation: a foliation of the fibres by Lagrangian leaves.

    Attributes:
        n: half fibre dimension.
        leaf: ``leaf(b, x0, s)`` -> points of the leaf through ``x0``; ``s`` is ``(M, n)``.
        tangent: ``tangent(b, x)`` -> leaf tangent basis ``(M, 2n, n)``.
        coordinates: ``coordinates(b, x)`` -> ``q`` of the leaf's foot on ``L_0`` ``(M, n)``.
        coordinates_jac: differential of ``coordinates`` ``(M, n, 2n)``.
    """

    n: int
    leaf: object
    tangent: object
    coordinates: object
    coordinates_jac: object
    name: str = "custom"


def momentum_polarisation(n):
    """Leaves ``{q = const}`` spanned by the momentum directions."""
    def leaf(b, x0, s):
        x0 = np.atleast_2d(x0)
        return np.concatenate([np.broadcast_to(x0[:, :n], s.shape), x0[:, n:] + s], axis=1)

    def tangent(b, x):
        M = x.shape[0]
        return np.broadcast_to(np.vstack([np.zeros((n, n)), np.eye(n)]), (M, 2 * n, n))

    def coords(b, x):
        return x[:, :n]

    def coords_jac(b, x):
        return np.broadcast_to(np.hstack([np.eye(n), np.zeros((n, n))]), (x.shape[0], n, 2 * n))

    return PolarisationSpec(n, leaf, tangent, coords, coords_jac, name="momentum leaves")


# ---------------------------------------------------------------- constructors


def cylinder(c_amplitude=0.0, kappa=0.0, base_samples=8, r_max=1.0, fibre_shape=(32, 16), n_patches=1):
    """``T*S^1`` window: ``omega_b = c(b) (1 + kappa r^2) dtheta ^ dr``."""
    base = BaseGrid.uniform(base_samples, "circle", n_patches=n_patches)
    return SymplecticBundleModel("cylinder", 1, base, c_amplitude, kappa, False, r_max, tuple(fibre_shape))


def torus2(c_amplitude=0.0, base_samples=8, fibre_shape=(32, 32), n_patches=1):
    """Flat ``T^2`` fibres with ``omega_b = c(b) dtheta_1 ^ dtheta_2``."""
    base = BaseGrid.uniform(base_samples, "circle", n_patches=n_patches)
    return SymplecticBundleModel("torus2", 1, base, c_amplitude, 0.0, True, np.pi, tuple(fibre_shape))


def torus4(c_amplitude=0.0, base_samples=4, r_max=1.0, periodic_momenta=False, fibre_shape=(8, 8, 8, 8),
           n_patches=1):
    """``T^2 x R^2`` window (or ``T^4``): ``omega_b = c(b)(dtheta_1 ^ dr_1 + dtheta_2 ^ dr_2)``."""
    base = BaseGrid.uniform(base_samples, "circle", n_patches=n_patches)
    return SymplecticBundleModel("torus4", 2, base, c_amplitude, 0.0, periodic_momenta, r_max, tuple(fibre_shape))


def product_MxB(base_samples=4):
    """``M x B -> B`` with ``M = T^4`` standard; used by the fibration tools."""
    m = torus4(0.0, base_samples, np.pi, True)
    return SymplecticBundleModel("product_MxB", 2, m.base, 0.0, 0.0, True, np.pi, m.fibre_shape)


MODELS = {"cylinder": cylinder, "torus2": torus2, "torus4": torus4, "product_MxB": product_MxB}


def build_model(name, **params):
    try:
        ctor = MODELS[name]
    except KeyError:
        raise ConfigurationError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return ctor(**params)


# ---------------------------------------------------------------- named 1-forms on L_0


def _form(dim, comps, parts):
    return FieldForm(1, dim, lambda b, q: np.stack([c(q) for c in comps], axis=1),
                     lambda b, q: np.stack([np.stack([d(q) for d in row], axis=1) for row in parts], axis=1))


def fourier_form(dim, amp_a, amp_b, k1, k2, kind):
    """Single-mode 1-forms on ``T^2``.

    ``kind="curl"``: ``A sin(k2 q2) dq1 + B sin(k1 q1) dq2`` (closed only if both vanish);
    ``kind="exact"``: ``d(A cos(k1 q1) cos(k2 q2))``.
    """
    if dim != 2:
        raise DegreeError("fourier forms are defined on T^2")
    z = lambda q: np.zeros(q.shape[0])
    if kind == "curl":
        return _form(2, [lambda q: amp_a * np.sin(k2 * q[:, 1]), lambda q: amp_b * np.sin(k1 * q[:, 0])],
                     [[z, lambda q: amp_a * k2 * np.cos(k2 * q[:, 1])],
                      [lambda q: amp_b * k1 * np.cos(k1 * q[:, 0]), z]])
    if kind == "exact":
        A = amp_a
        return _form(2, [lambda q: -A * k1 * np.sin(k1 * q[:, 0]) * np.cos(k2 * q[:, 1]),
                         lambda q: -A * k2 * np.cos(k1 * q[:, 0]) * np.sin(k2 * q[:, 1])],
                     [[lambda q: -A * k1 ** 2 * np.cos(k1 * q[:, 0]) * np.cos(k2 * q[:, 1]),
                       lambda q: A * k1 * k2 * np.sin(k1 * q[:, 0]) * np.sin(k2 * q[:, 1])],
                      [lambda q: A * k1 * k2 * np.sin(k1 * q[:, 0]) * np.sin(k2 * q[:, 1]),
                       lambda q: -A * k2 ** 2 * np.cos(k1 * q[:, 0]) * np.cos(k2 * q[:, 1])]])
    raise ConfigurationError(f"unknown fourier form kind {kind!r}")


def named_form(name, dim=2):
    """Forms referenced by scenario files."""
    if name == "zero":
        return FieldForm.zeros(1, dim)
    if name == "const":
        return FieldForm.constant(1, dim, [0.3] + [0.0] * (dim - 1))
    if name == "sin_t2_dt1":
        return fourier_form(dim, 1.0, 0.0, 1, 1, "curl")
    if name == "exact_cos":
        return fourier_form(dim, 0.1, 0.0, 1, 1, "exact")
    if name == "mixed":
        return FieldForm.constant(1, dim, [0.3, 0.0]) + fourier_form(dim, 1.0, 0.0, 1, 1, "curl")
    raise ConfigurationError(f"unknown named form {name!r}")
