"""Glued right-inverse of the fibred differential and the closed-form projection.

On each patch ``B_i`` of the base cover the fibres are identified with the
fibre over a reference sample by a trivialization ``Phi_i`` (identity or a
cyclic grid rotation).  On the reference fibre ``delta_i = G d*`` is the
minimum-norm right inverse built from a sparse LU factorization of the
flat-torus Hodge Laplacian, bordered by the harmonic block indicators.  The
patch operators are glued with the partition of unity of the base grid::

    delta(beta)_b = sum_i rho_i(b) Phi_i^{-1} delta_i(Phi_i beta_b)
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BackendError, ConfigurationError, CoverError, DegreeError, NonExactError
from .fibred_forms import CochainForm, fibred_d

EXACTNESS_TOL = 1e-6
_threads = 1


def set_threads(n):
    """Number of worker threads used for per-sample solves."""
    global _threads
    _threads = max(int(n), 1)


class GreenSolver:
    """Minimum-norm solver for ``d_k x = beta`` on one periodic fibre complex."""

    def __init__(self, complex, k):
        if not complex.fully_periodic:
            raise ConfigurationError("Green solves need a fully periodic fibre")
        self.complex, self.k = complex, k
        D = complex.coboundary(k).astype(float)
        W = sp.diags(complex.hodge_weights(k))
        W1 = sp.diags(complex.hodge_weights(k + 1))
        A = D.T @ W1 @ D
        if k > 0:
            Dm = complex.coboundary(k - 1).astype(float)
            Wm_inv = sp.diags(1.0 / complex.hodge_weights(k - 1))
            A = A + W @ Dm @ Wm_inv @ Dm.T @ W
        U = complex.harmonic_basis(k)
        h = U.shape[1]
        K = sp.bmat([[A, U], [U.T, None]], format="csc")
        self._lu = spla.splu(K)
        self._D = D
        self._W1 = W1
        self._n, self._h = A.shape[0], h

    def solve(self, beta):
        """Columns of ``beta`` are (k+1)-cochains; returns k-cochains column-wise."""
        beta = np.asarray(beta, dtype=float)
        single = beta.ndim == 1
        B = beta[:, None] if single else beta
        rhs = np.vstack([self._D.T @ (self._W1 @ B), np.zeros((self._h, B.shape[1]))])
        x = self._lu.solve(rhs)[: self._n]
        return x[:, 0] if single else x


@dataclass(frozen=True)
class Trivialization:
    """Identification of fibres over a patch with its reference fibre.

    ``rotations`` lists ``(axis, steps)`` cyclic grid shifts; empty means identity.
    """

    rotations: tuple = ()

    def forward(self, complex, k, values):
        for axis, steps in self.rotations:
            values = values[..., complex.shift_permutation(k, axis, steps)]
        return values

    def backward(self, complex, k, values):
        for axis, steps in reversed(self.rotations):
            values = values[..., complex.shift_permutation(k, axis, -steps)]
        return values


@dataclass(frozen=True, eq=False)
class DeltaOperator:
    """Glued right inverse ``delta`` of ``d`` over a base cover.

    Attributes:
        complex: typical fibre complex.
        base: base grid carrying the cover and partition of unity.
        reference: reference sample index ``b_i`` per patch.
        trivializations: one :class:`Trivialization` per patch.
        solvers: ``{k: GreenSolver}`` inverting ``d_k``.
    """

    complex: object
    base: object
    reference: tuple
    trivializations: tuple
    solvers: dict = field(repr=False)

    def delta_slice(self, k, beta, b_index):
        """``delta`` applied to (k+1)-cochains over one base sample (columns allowed)."""
        solver = self._solver(k)
        out = 0.0
        for i, triv in enumerate(self.trivializations):
            w = self.base.weights[i, b_index]
            if w == 0:
                continue
            moved = triv.forward(self.complex, k + 1, beta.T).T
            x = solver.solve(moved)
            out = out + w * triv.backward(self.complex, k, x.T).T
        return out

    def _solver(self, k):
        try:
            return self.solvers[k]
        except KeyError:
            raise DegreeError(f"delta was not built for degree {k}") from None


def build_delta(complex, base, degrees=None, twist=None, reference=None):
    """Factor the patch Green operators and assemble a :class:`DeltaOperator`.

    Args:
        complex: periodic :class:`FibreComplex` of the typical fibre.
        base: :class:`BaseGrid`; its patches and weights are used for gluing.
        degrees: degrees ``k`` for which ``delta: C^{k+1} -> C^k`` is needed.
        twist: optional ``{patch: [(axis, steps), ...]}`` grid rotations.
        reference: optional reference sample per patch (default: patch middle).
    """
    degrees = range(complex.dim) if degrees is None else sorted(set(degrees))
    for k in degrees:
        if not 0 <= k < complex.dim:
            raise DegreeError(f"no right inverse of d_{k} on a {complex.dim}-dimensional fibre")
    covered = np.zeros(base.size, dtype=bool)
    for p in base.patches:
        covered[p] = True
    if not covered.all():
        raise CoverError("cover does not reach every base sample")
    twist = twist or {}
    trivs = tuple(Trivialization(tuple(twist.get(i, ()))) for i in range(len(base.patches)))
    if reference is None:
        reference = tuple(int(p[len(p) // 2]) for p in base.patches)
    # patch fibres are isometric copies of one flat torus: one factorization per degree
    solvers = {k: GreenSolver(complex, k) for k in degrees}
    return DeltaOperator(complex, base, tuple(reference), trivs, solvers)


def _require_cochain(form, D):
    if form.backend != "cochain":
        raise BackendError("the glued delta acts on cochain forms")
    if form.complex is not D.complex or form.base is not D.base:
        raise BackendError("form and delta operator live on different grids")


def apply_delta(D, beta):
    """``delta_p`` of a (k+1)-form, sample by sample."""
    _require_cochain(beta, D)
    k = beta.degree - 1
    if k < 0:
        raise DegreeError("delta lowers the degree; 0-forms have no preimage degree")

    def one(i):
        return D.delta_slice(k, beta.values[i], i)

    if _threads > 1:
        with ThreadPoolExecutor(_threads) as pool:
            rows = list(pool.map(one, range(beta.base.size)))
    else:
        rows = [one(i) for i in range(beta.base.size)]
    return CochainForm(k, D.complex, D.base, np.vstack(rows))


def projection(D, alpha):
    """``P alpha = delta_p d_p alpha``; its kernel is the closed forms."""
    _require_cochain(alpha, D)
    if alpha.degree == D.complex.dim:
        return CochainForm.zeros(alpha.degree, D.complex, D.base)
    return apply_delta(D, fibred_d(alpha))


def project_closed(D, alpha):
    """Split ``alpha = closed + complement`` with ``complement = delta_p d_p alpha``."""
    complement = projection(D, alpha)
    return alpha - complement, complement


@dataclass
class PrimitiveReport:
    primitive: CochainForm
    residual: float
    per_sample: list
    smoothness: float


def primitive_family(D, alpha, tol=EXACTNESS_TOL, check=True):
    """Smooth family of primitives ``delta_p alpha`` of a fibrewise exact form.

    The reconstruction residual ``|d delta alpha - alpha|`` (sup of densities)
    is measured per sample; above ``tol`` a :class:`NonExactError` names the
    offending samples.  ``smoothness`` is the largest deviation between the
    result at odd samples and a cubic spline through the even samples.
    """
    prim = apply_delta(D, alpha)
    vols = D.complex.cell_volumes(alpha.degree)
    diff = (fibred_d(prim).values - alpha.values) / vols
    per_sample = np.max(np.abs(diff), axis=1).tolist() if diff.size else [0.0] * alpha.base.size
    residual = max(per_sample) if per_sample else 0.0
    if check and residual > tol:
        bad = [i for i, r in enumerate(per_sample) if r > tol]
        raise NonExactError(f"form is not fibrewise exact (residual {residual:.3e})", residual, bad)
    return PrimitiveReport(prim, residual, per_sample, _smoothness(prim))


def _smoothness(form):
    from scipy.interpolate import CubicSpline

    s, v = form.base.samples, form.densities()
    m = s.size
    if m < 8:
        return 0.0
    if form.base.topology == "circle" and m % 2 == 0:
        xs = np.append(s[0::2], s[0] + 2 * np.pi)
        ys = np.vstack([v[0::2], v[:1]])
        spline = CubicSpline(xs, ys, axis=0, bc_type="periodic")
        odd = np.arange(1, m, 2)
    else:
        spline = CubicSpline(s[0::2], v[0::2], axis=0)
        odd = np.arange(1, m - 1, 2)
        odd = odd[s[odd] < s[0::2][-1]]
    return float(np.max(np.abs(spline(s[odd]) - v[odd]))) if odd.size else 0.0


def decomposition_report(D, alpha):
    """JSON-ready summary of the right-inverse and projection identities for ``alpha``."""
    k = alpha.degree
    out = {"degree": k}
    if k < D.complex.dim:
        da = fibred_d(alpha)
        dd = fibred_d(apply_delta(D, da))
        scale = max(np.max(np.abs(da.values)), np.finfo(float).tiny)
        out["sup_residual_d_delta_d"] = float(np.max(np.abs(dd.values - da.values)) / scale)
        P1 = projection(D, alpha)
        P2 = projection(D, P1)
        out["idempotence_residual"] = float(np.max(np.abs(P2.values - P1.values)) / scale)
        closed, _ = project_closed(D, alpha)
        per = np.max(np.abs(fibred_d(closed).values), axis=1)
        out["per_sample"] = [{"base_index": i, "closed_defect": float(r)} for i, r in enumerate(per)]
    else:
        out.update(sup_residual_d_delta_d=0.0, idempotence_residual=0.0,
                   per_sample=[{"base_index": i, "closed_defect": 0.0} for i in range(alpha.base.size)])
    return out
