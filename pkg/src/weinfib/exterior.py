"""Pointwise exterior algebra on component arrays.

A k-form on an n-dimensional space is stored by its strictly increasing
components ``alpha_I``, ``I = (i_1 < ... < i_k)``, in lexicographic order of
``itertools.combinations(range(n), k)``.  Batched arrays carry a leading
point axis, so a field sampled at ``M`` points has shape ``(M, C(n, k))``.

Conventions: ``(dx_i ^ dx_j)(u, v) = u_i v_j - u_j v_i`` and the interior
product contracts the first slot, so that
``iota_Z (dx_i ^ dx_j) = Z_i dx_j - Z_j dx_i``.
"""
from functools import lru_cache
from itertools import combinations, permutations
from math import comb

import numpy as np


@lru_cache(maxsize=None)
def index_sets(n, k):
    """Sorted multi-indices of degree ``k`` in dimension ``n``."""
    return tuple(combinations(range(n), k))


def n_components(n, k):
    return comb(n, k)


def _perm_sign(p):
    p = list(p)
    sign = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            sign = -sign
    return sign


@lru_cache(maxsize=None)
def _expansion(n, k):
    # (flat tensor index, component index, sign) for every ordered index tuple
    rows = []
    for c, idx in enumerate(index_sets(n, k)):
        for p in permutations(range(k)):
            ordered = tuple(idx[q] for q in p)
            rows.append((np.ravel_multi_index(ordered, (n,) * k) if k else 0, c, _perm_sign(p)))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def to_tensor(comp, n, k):
    """Expand components ``(M, C)`` into antisymmetric tensors ``(M, n, ..., n)``."""
    comp = np.asarray(comp, dtype=float)
    M = comp.shape[0]
    if k == 0:
        return comp[:, 0].copy()
    table = _expansion(n, k)
    flat = np.zeros((M, n ** k))
    flat[:, table[:, 0]] = comp[:, table[:, 1]] * table[:, 2]
    return flat.reshape((M,) + (n,) * k)


def from_tensor(T, n, k):
    """Read the sorted components back out of an antisymmetric tensor."""
    T = np.asarray(T, dtype=float)
    M = T.shape[0]
    if k == 0:
        return T.reshape(M, 1).copy()
    return T.reshape(M, n ** k)[:, _flat_columns(n, k)]


@lru_cache(maxsize=None)
def _flat_columns(n, k):
    return np.array([np.ravel_multi_index(idx, (n,) * k) for idx in index_sets(n, k)], dtype=np.int64)


def evaluate(comp, n, k, vectors):
    """Evaluate forms on ``k`` vectors; ``vectors`` is a sequence of ``(M, n)`` arrays."""
    T = to_tensor(comp, n, k)
    for v in vectors:
        T = np.einsum("mi...,mi->m...", T, v)
    return T


def contract(vec, comp, n, k):
    """Interior product ``iota_vec alpha`` (first slot)."""
    if k == 0:
        raise ValueError("cannot contract a 0-form")
    T = to_tensor(comp, n, k)
    return from_tensor(np.einsum("mi...,mi->m...", T, vec), n, k - 1)


def pull(comp, jac, k):
    """Pull back components through Jacobians ``jac`` of shape ``(M, n_out, n_in)``.

    ``comp`` holds the form at the image points (dimension ``n_out``); the
    result lives in dimension ``n_in``.
    """
    n_out, n_in = jac.shape[1], jac.shape[2]
    T = to_tensor(comp, n_out, k)
    for _ in range(k):
        # contract the leading slot, append the new index last; k rotations restore order
        T = np.einsum("mi...,mij->m...j", T, jac)
    return from_tensor(T, n_in, k)


@lru_cache(maxsize=None)
def _d_table(n, k):
    out = {I: c for c, I in enumerate(index_sets(n, k + 1))}
    src = {I: c for c, I in enumerate(index_sets(n, k))}
    rows = []
    for I, c in out.items():
        for m, axis in enumerate(I):
            rest = I[:m] + I[m + 1:]
            rows.append((c, src[rest], axis, -1 if m % 2 else 1))
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


def d_from_partials(partials, n, k):
    """Exterior derivative from partials ``(M, C(n, k), n)``.

    ``(d alpha)_I = sum_m (-1)^m  d_{i_m} alpha_{I without i_m}``.
    """
    M = partials.shape[0]
    out = np.zeros((M, comb(n, k + 1)))
    table = _d_table(n, k)
    np.add.at(out, (slice(None), table[:, 0]),
              partials[:, table[:, 1], table[:, 2]] * table[:, 3])
    return out


def matrix_of_two_form(comp, n):
    """Matrices ``Omega[m, i, j] = omega(e_i, e_j)`` of a batch of 2-forms."""
    return to_tensor(comp, n, 2)
