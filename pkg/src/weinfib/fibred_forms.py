"""Fibred differential forms on trivialized bundles ``B x F``.

Two backends carry a p-fibred k-form:

* :class:`CochainForm` -- one real cochain on the cubical fibre complex per
  base sample (discrete exterior calculus, exact ``d``).
* :class:`FieldForm` -- an analytic callable ``(b, x) -> components`` with
  optional exact partial derivatives; missing derivatives fall back to
  central differences when ``fd_step`` is set.

Fibre points are batched as arrays of shape ``(M, n)``; the base point ``b``
is a scalar.  Every operation returns a new object.
"""
import numpy as np

from . import exterior as ext
from .errors import BackendError, ConfigurationError, DegreeError, NonVerticalMapError, TopDegreeError
from .grids import BaseGrid, FibreComplex
from .integrators import central_jacobian, rk4_flow

H_FD = 1e-4
VERTICAL_TOL = 1e-12


def _points(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, n)
    if x.shape[-1] != n:
        raise ValueError(f"expected fibre points of dimension {n}, got shape {x.shape}")
    return x


class FibredForm:
    """Common surface of both backends."""

    degree: int
    backend: str

    def _check_same(self, other):
        if not isinstance(other, FibredForm):
            return NotImplemented
        if self.backend != other.backend:
            raise BackendError("cannot mix cochain and field forms in one expression")
        if self.degree != other.degree:
            raise DegreeError("degree mismatch")
        return None


class CochainForm(FibredForm):
    """A family of k-cochains, one per base sample.

    Attributes:
        degree: k.
        complex: the :class:`FibreComplex` of the typical fibre.
        base: the :class:`BaseGrid` indexing the family.
        values: read-only array ``(n_base_samples, n_k_cells)``.
    """

    backend = "cochain"

    def __init__(self, degree, complex, base, values):
        if not 0 <= degree <= complex.dim:
            raise DegreeError(f"degree {degree} outside 0..{complex.dim}")
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if values.shape != (base.size, complex.n_cells(degree)):
            raise ValueError(f"cochain values must have shape {(base.size, complex.n_cells(degree))}, "
                             f"got {values.shape}")
        values.setflags(write=False)
        self.degree = degree
        self.complex = complex
        self.base = base
        self.values = values

    def __repr__(self):
        return f"CochainForm(degree={self.degree}, {self.complex!r}, samples={self.base.size})"

    def _like(self, values, degree=None):
        return CochainForm(self.degree if degree is None else degree, self.complex, self.base, values)

    def _check_same(self, other):
        bad = super()._check_same(other)
        if bad is not None:
            return bad
        if other.complex is not self.complex or other.base is not self.base:
            raise BackendError("cochain forms live on different complexes or base grids")
        return None

    def __add__(self, other):
        bad = self._check_same(other)
        return bad if bad is not None else self._like(self.values + other.values)

    def __sub__(self, other):
        bad = self._check_same(other)
        return bad if bad is not None else self._like(self.values - other.values)

    def __mul__(self, scalar):
        return self._like(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def densities(self):
        """Values divided by cell volumes (component-like magnitudes)."""
        return self.values / self.complex.cell_volumes(self.degree)

    def sup_norm(self):
        return float(np.max(np.abs(self.densities()))) if self.values.size else 0.0

    def interpolate(self, b):
        """Cubic interpolation of the family at base points ``b``."""
        from scipy.interpolate import CubicSpline

        s = self.base.samples
        if self.base.topology == "circle":
            period = 2 * np.pi
            xs = np.append(s, s[0] + period)
            ys = np.vstack([self.values, self.values[:1]])
            spline = CubicSpline(xs, ys, axis=0, bc_type="periodic")
            b = s[0] + np.mod(np.asarray(b, dtype=float) - s[0], period)
        else:
            spline = CubicSpline(s, self.values, axis=0)
        return spline(b)

    @classmethod
    def zeros(cls, degree, complex, base):
        return cls(degree, complex, base, np.zeros((base.size, complex.n_cells(degree))))


class FieldForm(FibredForm):
    """Analytic fibred k-form on a fibre of dimension ``dim``.

    Args:
        degree: k.
        dim: fibre dimension n.
        func: ``func(b, x)`` with ``x`` of shape ``(M, n)`` returning ``(M, C(n, k))``.
        deriv: optional ``deriv(b, x)`` returning partials ``(M, C(n, k), n)``.
        fd_step: central-difference step used when ``deriv`` is missing;
            ``None`` forbids finite differences.
    """

    backend = "field"

    def __init__(self, degree, dim, func, deriv=None, fd_step=H_FD):
        if not 0 <= degree <= dim:
            raise DegreeError(f"degree {degree} outside 0..{dim}")
        self.degree = degree
        self.dim = dim
        self.func = func
        self.deriv = deriv
        self.fd_step = fd_step

    def __repr__(self):
        exact = "exact" if self.deriv is not None else f"fd={self.fd_step}"
        return f"FieldForm(degree={self.degree}, dim={self.dim}, {exact})"

    def __call__(self, b, x):
        x = _points(x, self.dim)
        out = np.asarray(self.func(b, x), dtype=float)
        return out.reshape(x.shape[0], ext.n_components(self.dim, self.degree))

    def partials(self, b, x):
        """Partial derivatives ``(M, C, n)`` of the components."""
        x = _points(x, self.dim)
        if self.deriv is not None:
            out = np.asarray(self.deriv(b, x), dtype=float)
            return out.reshape(x.shape[0], ext.n_components(self.dim, self.degree), self.dim)
        if self.fd_step is None:
            raise ConfigurationError("form has no derivative callable and finite differences are disabled")
        return central_jacobian(lambda y: self(b, y), x, self.fd_step)

    def _check_same(self, other):
        bad = super()._check_same(other)
        if bad is not None:
            return bad
        if other.dim != self.dim:
            raise DegreeError("fibre dimension mismatch")
        return None

    def _combine(self, other, sign):
        bad = self._check_same(other)
        if bad is not None:
            return bad
        deriv = None
        if self.deriv is not None and other.deriv is not None:
            def deriv(b, x):
                return self.partials(b, x) + sign * other.partials(b, x)
        return FieldForm(self.degree, self.dim, lambda b, x: self(b, x) + sign * other(b, x),
                         deriv, _fd(self, other))

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        c = float(scalar)
        deriv = None if self.deriv is None else (lambda b, x: c * self.partials(b, x))
        return FieldForm(self.degree, self.dim, lambda b, x: c * self(b, x), deriv, self.fd_step)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    @classmethod
    def constant(cls, degree, dim, components):
        comp = np.asarray(components, dtype=float).reshape(1, -1)
        C = ext.n_components(dim, degree)
        return cls(degree, dim, lambda b, x: np.broadcast_to(comp, (x.shape[0], C)),
                   lambda b, x: np.zeros((x.shape[0], C, dim)))

    @classmethod
    def zeros(cls, degree, dim):
        return cls.constant(degree, dim, np.zeros(ext.n_components(dim, degree)))


def _fd(*forms):
    steps = [f.fd_step for f in forms if f.fd_step is not None]
    if len(steps) < len(forms):
        return None
    return min(steps)


class VerticalField:
    """Family of fibre-tangent vector fields ``Z_b``.

    Only fibre components exist, so verticality holds by construction.
    """

    def __init__(self, dim, func, jac=None, fd_step=H_FD):
        self.dim = dim
        self.func = func
        self.jac = jac
        self.fd_step = fd_step

    def __call__(self, b, x):
        x = _points(x, self.dim)
        return np.asarray(self.func(b, x), dtype=float).reshape(x.shape[0], self.dim)

    def jacobian(self, b, x):
        """``J[m, i, j] = d Z_i / d x_j``."""
        x = _points(x, self.dim)
        if self.jac is not None:
            return np.asarray(self.jac(b, x), dtype=float).reshape(x.shape[0], self.dim, self.dim)
        if self.fd_step is None:
            raise ConfigurationError("field has no Jacobian callable and finite differences are disabled")
        return central_jacobian(lambda y: self(b, y), x, self.fd_step)

    def __neg__(self):
        jac = None if self.jac is None else (lambda b, x: -self.jacobian(b, x))
        return VerticalField(self.dim, lambda b, x: -self(b, x), jac, self.fd_step)

    @classmethod
    def constant(cls, dim, vector):
        v = np.asarray(vector, dtype=float).reshape(1, dim)
        return cls(dim, lambda b, x: np.broadcast_to(v, x.shape), lambda b, x: np.zeros((x.shape[0], dim, dim)))


class VerticalMap:
    """Bundle map ``(b, x) -> (b, phi_b(x))``.

    ``func(b, x)`` returns image fibre points.  With ``total=True`` it returns
    a pair ``(b_out, x_out)`` instead; the base drift is checked whenever the
    map is used and must stay below ``1e-12``.
    """

    def __init__(self, dim, func, jac=None, fd_step=H_FD, total=False, dim_out=None):
        self.dim = dim
        self.dim_out = dim if dim_out is None else dim_out
        self.func = func
        self.jac = jac
        self.fd_step = fd_step
        self.total = total

    def __call__(self, b, x):
        x = _points(x, self.dim)
        if self.total:
            b_out, y = self.func(b, x)
            drift = np.max(np.abs(np.asarray(b_out, dtype=float) - b))
            if drift > VERTICAL_TOL:
                raise NonVerticalMapError(f"map moves the base point by {drift:.3e}")
        else:
            y = self.func(b, x)
        return np.asarray(y, dtype=float).reshape(x.shape[0], self.dim_out)

    def jacobian(self, b, x):
        """``J[m, i, j] = d phi_i / d x_j``."""
        x = _points(x, self.dim)
        if self.jac is not None:
            return np.asarray(self.jac(b, x), dtype=float).reshape(x.shape[0], self.dim_out, self.dim)
        if self.fd_step is None:
            raise ConfigurationError("map has no Jacobian callable and finite differences are disabled")
        return central_jacobian(lambda y: self(b, y), x, self.fd_step)

    def compose(self, inner):
        """``self o inner``."""
        def jac(b, x):
            return self.jacobian(b, inner(b, x)) @ inner.jacobian(b, x)
        return VerticalMap(inner.dim, lambda b, x: self(b, inner(b, x)), jac, self.fd_step, dim_out=self.dim_out)

    @classmethod
    def identity(cls, dim):
        return cls(dim, lambda b, x: x, lambda b, x: np.broadcast_to(np.eye(dim), (x.shape[0], dim, dim)))


# ---------------------------------------------------------------- operations


def fibred_d(alpha):
    """Fibrewise exterior derivative ``d_p``.

    Raises:
        TopDegreeError: on a top-degree form.
        ConfigurationError: field form without derivatives or finite differences.
    """
    if alpha.backend == "cochain":
        k, cx = alpha.degree, alpha.complex
        if k >= cx.dim:
            raise TopDegreeError("d of a top-degree form is not a form")
        D = cx.coboundary(k)
        return CochainForm(k + 1, cx, alpha.base, (D @ alpha.values.T).T)
    k, n = alpha.degree, alpha.dim
    if k >= n:
        raise TopDegreeError("d of a top-degree form is not a form")
    if alpha.deriv is None and alpha.fd_step is None:
        raise ConfigurationError("form has no derivative callable and finite differences are disabled")
    return FieldForm(k + 1, n, lambda b, x: ext.d_from_partials(alpha.partials(b, x), n, k),
                     fd_step=alpha.fd_step if alpha.fd_step is not None else H_FD)


def restrict(alpha, b):
    """The form on the fibre over one base point.

    For cochain forms ``b`` is a sample index and the stored slice is returned.
    For field forms ``b`` is a base value and the result is the constant
    family ``b' -> alpha_b``.
    """
    if alpha.backend == "cochain":
        m = alpha.base.size
        if not isinstance(b, (int, np.integer)) or not 0 <= b < m:
            raise IndexError(f"base sample index {b!r} out of range 0..{m - 1}")
        return alpha.values[b]
    b0 = float(b)
    deriv = None if alpha.deriv is None else (lambda _b, x: alpha.partials(b0, x))
    return FieldForm(alpha.degree, alpha.dim, lambda _b, x: alpha(b0, x), deriv, alpha.fd_step)


def assemble(slices, complex, base, degree):
    """Inverse of :func:`restrict` for cochain families."""
    return CochainForm(degree, complex, base, np.vstack(slices))


def _require_field(*objs):
    for o in objs:
        if getattr(o, "backend", "field") != "field":
            raise BackendError("operation defined on the field backend only")


def contract(Z, alpha):
    """Interior product ``Z -| alpha`` on the field backend."""
    _require_field(alpha)
    k, n = alpha.degree, alpha.dim
    if k == 0:
        raise DegreeError("cannot contract a 0-form")
    if Z.dim != n:
        raise DegreeError("field and form live on different fibre dimensions")

    def func(b, x):
        return ext.contract(Z(b, x), alpha(b, x), n, k)

    deriv = None
    if alpha.deriv is not None and Z.jac is not None:
        def deriv(b, x):
            z, dz = Z(b, x), Z.jacobian(b, x)
            T, dT = ext.to_tensor(alpha(b, x), n, k), None
            parts = alpha.partials(b, x)
            out = np.empty((x.shape[0], ext.n_components(n, k - 1), n))
            for m in range(n):
                dT = ext.to_tensor(parts[:, :, m], n, k)
                term = np.einsum("mi...,mi->m...", dT, z) + np.einsum("mi...,mi->m...", T, dz[:, :, m])
                out[:, :, m] = ext.from_tensor(term, n, k - 1)
            return out

    return FieldForm(k - 1, n, func, deriv, alpha.fd_step if alpha.fd_step is not None else H_FD)


def pullback(phi, alpha):
    """Fibrewise pullback ``(phi^* alpha)_b = phi_b^* alpha_b``."""
    _require_field(alpha)
    k = alpha.degree
    if phi.dim_out != alpha.dim:
        raise DegreeError("map target dimension differs from the form's fibre dimension")

    def func(b, x):
        return ext.pull(alpha(b, phi(b, x)), phi.jacobian(b, x), k)

    return FieldForm(k, phi.dim, func, fd_step=alpha.fd_step if alpha.fd_step is not None else H_FD)


def lie_derivative(Z, alpha):
    """Fibrewise Lie derivative via ``Z -| d_p alpha + d_p (Z -| alpha)``."""
    _require_field(alpha)
    k = alpha.degree
    if k == 0:
        return contract(Z, fibred_d(alpha))
    if k == alpha.dim:
        return fibred_d(contract(Z, alpha))
    return contract(Z, fibred_d(alpha)) + fibred_d(contract(Z, alpha))


def flow(Z, t, steps=None, h=1e-3):
    """Time-``t`` flow of a vertical field as a :class:`VerticalMap`.

    RK4 with step close to ``h``; the Jacobian comes from the variational
    equation integrated alongside.
    """
    steps = steps if steps is not None else max(int(np.ceil(abs(t) / h)), 1)

    def run(b, x):
        return rk4_flow(lambda y: Z(b, y), x, t, steps, jac=lambda y: Z.jacobian(b, y))

    return VerticalMap(Z.dim, lambda b, x: run(b, x)[0], lambda b, x: run(b, x)[1])


def discretize(alpha, complex, base, method="integrate", order=4):
    """Turn a field form into a cochain family on ``complex`` over ``base``.

    ``method="integrate"`` applies the de Rham map (tensor Gauss-Legendre of
    ``order`` nodes per cell axis); ``"sample"`` uses the midpoint value
    times the cell volume.
    """
    _require_field(alpha)
    if alpha.dim != complex.dim:
        raise DegreeError("form and complex have different dimensions")
    k = alpha.degree
    corners, _ = complex.cell_geometry(k)
    subsets = complex.subsets(k)
    sub_index = {S: i for i, S in enumerate(ext.index_sets(complex.dim, k))}
    if method == "sample" or k == 0:
        nodes, weights = np.array([0.5]), np.array([1.0])
    elif method == "integrate":
        g, w = np.polynomial.legendre.leggauss(order)
        nodes, weights = 0.5 * (g + 1), 0.5 * w
    else:
        raise ConfigurationError(f"unknown discretization method {method!r}")
    out = np.zeros((base.size, complex.n_cells(k)))
    for S in subsets:
        blk = complex.block(k, S)
        vol = np.prod(complex.spacing[list(S)]) if S else 1.0
        grids = np.meshgrid(*([nodes] * k), indexing="ij") if k else []
        wts = np.ones(1)
        offsets = np.zeros((1, complex.dim))
        if k:
            pts = np.stack([gg.ravel() for gg in grids], axis=1)
            wts = np.prod(np.stack(np.meshgrid(*([weights] * k), indexing="ij")), axis=0).ravel()
            offsets = np.zeros((pts.shape[0], complex.dim))
            offsets[:, list(S)] = pts * complex.spacing[list(S)]
        c0 = corners[blk]
        q = (c0[None, :, :] + offsets[:, None, :]).reshape(-1, complex.dim)
        for i, b in enumerate(base.samples):
            vals = alpha(b, q)[:, sub_index[S]].reshape(offsets.shape[0], -1)
            out[i, blk] = vol * (wts @ vals)
    return CochainForm(k, complex, base, out)


def sup_on(alpha, base_points, fibre_points):
    """Sup norm of a field form's components over a sample set."""
    fibre_points = _points(fibre_points, alpha.dim)
    return max(float(np.max(np.abs(alpha(b, fibre_points)))) if fibre_points.size else 0.0
               for b in np.atleast_1d(base_points))


def torus_points(dim, per_axis, lengths=2 * np.pi, periodic=True, lo=None):
    """Uniform fibre sample grid, flattened to ``(per_axis**dim, dim)``."""
    lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (dim,))
    periodic = (periodic,) * dim if isinstance(periodic, bool) else periodic
    lo = np.zeros(dim) if lo is None else np.broadcast_to(np.asarray(lo, dtype=float), (dim,))
    axes = [l0 + (np.arange(per_axis) * L / per_axis if p else np.linspace(0, L, per_axis))
            for l0, L, p in zip(lo, lengths, periodic)]
    return np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)


__all__ = [
    "BaseGrid", "FibreComplex", "FibredForm", "CochainForm", "FieldForm", "VerticalField",
    "VerticalMap", "fibred_d", "restrict", "assemble", "contract", "pullback", "lie_derivative",
    "flow", "discretize", "sup_on", "torus_points", "H_FD",
]
