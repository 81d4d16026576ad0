"""Base sample grids with a partition of unity, and cubical fibre complexes."""
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, CoverError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BaseGrid:
    """Finite sample of a 1-dimensional base with a cover and bump weights.

    Attributes:
        topology: ``"interval"`` or ``"circle"``.
        samples: strictly increasing base points.
        patches: one index array per patch ``B_i``.
        weights: array ``(n_patches, n_samples)``; column sums are 1.
    """

    topology: str
    samples: np.ndarray
    patches: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        object.__setattr__(self, "patches", tuple(_frozen(p, np.int64) for p in self.patches))
        object.__setattr__(self, "weights", _frozen(np.atleast_2d(self.weights)))
        self.validate()

    def validate(self):
        if self.topology not in ("interval", "circle"):
            raise CoverError(f"unknown base topology {self.topology!r}")
        s = self.samples
        if s.ndim != 1 or s.size == 0 or np.any(np.diff(s) <= 0):
            raise CoverError("base samples must be strictly increasing")
        m = s.size
        if self.weights.shape != (len(self.patches), m):
            raise CoverError("weights must have shape (n_patches, n_samples)")
        if np.any(self.weights < 0):
            raise CoverError("bump weights must be nonnegative")
        covered = np.zeros(m, dtype=bool)
        for i, patch in enumerate(self.patches):
            if patch.size == 0 or patch.min() < 0 or patch.max() >= m:
                raise CoverError(f"patch {i} has indices outside the sample range")
            inside = np.zeros(m, dtype=bool)
            inside[patch] = True
            if np.any(self.weights[i, ~inside] != 0):
                raise CoverError(f"weight of patch {i} is supported outside the patch")
            covered |= inside
        if not covered.all():
            missing = np.flatnonzero(~covered).tolist()
            raise CoverError(f"cover misses base samples {missing}")
        if not np.allclose(self.weights.sum(axis=0), 1.0, rtol=0, atol=1e-12):
            raise CoverError("bump weights do not sum to 1")
        if len(self.patches) > 1:
            sets = [set(p.tolist()) for p in self.patches]
            for i, a in enumerate(sets):
                if max(len(a & b) for j, b in enumerate(sets) if j != i) < 2:
                    raise CoverError(f"patch {i} overlaps its neighbours in fewer than 2 samples")

    @property
    def size(self):
        return self.samples.size

    @classmethod
    def uniform(cls, m, topology="circle", n_patches=1, overlap=1, start=0.0, stop=None):
        """Uniform samples with ``n_patches`` overlapping patches.

        Consecutive patches share ``2 * overlap`` samples.  Weights are
        ``sin^2`` bumps over each patch, normalized to sum to one.
        """
        if topology == "circle":
            stop = 2 * np.pi if stop is None else stop
            samples = start + (stop - start) * np.arange(m) / m
        else:
            stop = 1.0 if stop is None else stop
            samples = np.linspace(start, stop, m)
        if n_patches < 1 or n_patches > m:
            raise CoverError("need 1 <= n_patches <= number of samples")
        if n_patches == 1:
            return cls(topology, samples, (np.arange(m),), np.ones((1, m)))
        cores = np.round(np.arange(n_patches + 1) * m / n_patches).astype(int)
        patches, raw = [], np.zeros((n_patches, m))
        for i in range(n_patches):
            idx = np.arange(cores[i] - overlap, cores[i + 1] + overlap)
            if topology == "circle":
                if idx.size >= m:
                    raise CoverError("patches too wide for the circle")
                idx = idx % m
            else:
                idx = idx[(idx >= 0) & (idx < m)]
            bump = np.sin(np.pi * (np.arange(idx.size) + 1) / (idx.size + 1)) ** 2
            patches.append(idx)
            raw[i, idx] = bump
        return cls(topology, samples, tuple(patches), raw / raw.sum(axis=0))


class FibreComplex:
    """Cubical cochain complex of a flat box, each axis periodic or not.

    k-cells are indexed block-wise: one block per increasing axis subset
    ``S`` (lexicographic), and inside a block by the C-ordered multi-index of
    the cell's lowest vertex.  A cell with axes ``S`` is oriented like
    ``dx_S``.
    """

    def __init__(self, shape, periodic=True, lengths=None, origin=None):
        self.shape = tuple(int(N) for N in shape)
        self.dim = len(self.shape)
        if not 1 <= self.dim <= 4:
            raise ConfigurationError("fibre dimension must be between 1 and 4")
        if isinstance(periodic, bool):
            periodic = (periodic,) * self.dim
        self.periodic = tuple(bool(p) for p in periodic)
        if lengths is None:
            lengths = [2 * np.pi] * self.dim
        self.lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (self.dim,)).copy()
        self.origin = np.zeros(self.dim) if origin is None else np.asarray(origin, dtype=float)
        for N, per in zip(self.shape, self.periodic):
            if N < (3 if per else 2):
                raise ConfigurationError("resolution too small")
        self.spacing = np.array([L / (N if per else N - 1)
                                 for L, N, per in zip(self.lengths, self.shape, self.periodic)])

    def __repr__(self):
        return f"FibreComplex(shape={self.shape}, periodic={self.periodic})"

    @property
    def fully_periodic(self):
        return all(self.periodic)

    def subsets(self, k):
        return tuple(combinations(range(self.dim), k))

    def block_shape(self, S):
        return tuple(N if (per or j not in S) else N - 1
                     for j, (N, per) in enumerate(zip(self.shape, self.periodic)))

    @cached_property
    def _offsets(self):
        out = {}
        for k in range(self.dim + 1):
            off, table = 0, {}
            for S in self.subsets(k):
                table[S] = off
                off += int(np.prod(self.block_shape(S)))
            out[k] = (table, off)
        return out

    def n_cells(self, k):
        return self._offsets[k][1]

    def block(self, k, S):
        """Slice of the k-cell index range belonging to axis subset ``S``."""
        start = self._offsets[k][0][tuple(S)]
        return slice(start, start + int(np.prod(self.block_shape(S))))

    def _block_vertices(self, S):
        shape = self.block_shape(S)
        return np.stack(np.unravel_index(np.arange(int(np.prod(shape))), shape), axis=1)

    def coboundary(self, k):
        """Signed incidence matrix ``d_k`` (integer, shape ``(n_{k+1}, n_k)``)."""
        return self._coboundaries[k]

    @cached_property
    def _coboundaries(self):
        mats = {}
        for k in range(self.dim):
            rows, cols, vals = [], [], []
            for S1 in self.subsets(k + 1):
                verts = self._block_vertices(S1)
                out_idx = np.arange(verts.shape[0]) + self.block(k + 1, S1).start
                for m, axis in enumerate(S1):
                    S = S1[:m] + S1[m + 1:]
                    shape = self.block_shape(S)
                    base = self.block(k, S).start
                    sign = -1 if m % 2 else 1
                    shifted = verts.copy()
                    shifted[:, axis] += 1
                    if self.periodic[axis]:
                        shifted[:, axis] %= self.shape[axis]
                    hi = np.ravel_multi_index(shifted.T, shape) + base
                    lo = np.ravel_multi_index(verts.T, shape) + base
                    rows += [out_idx, out_idx]
                    cols += [hi, lo]
                    vals += [np.full(out_idx.size, sign), np.full(out_idx.size, -sign)]
            mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(self.n_cells(k + 1), self.n_cells(k)), dtype=np.int64)
            mat.sum_duplicates()
            mat.eliminate_zeros()
            mats[k] = mat
        return mats

    def cell_volumes(self, k):
        vol = np.empty(self.n_cells(k))
        for S in self.subsets(k):
            vol[self.block(k, S)] = np.prod(self.spacing[list(S)]) if S else 1.0
        return vol

    def hodge_weights(self, k):
        """Diagonal of the flat-metric inner product on k-cochains."""
        w = np.empty(self.n_cells(k))
        every = np.prod(self.spacing)
        for S in self.subsets(k):
            inside = np.prod(self.spacing[list(S)]) if S else 1.0
            w[self.block(k, S)] = every / inside ** 2
        return w

    def cell_geometry(self, k):
        """Lowest-vertex coordinates ``(n_k, dim)`` and the axis subset of every cell."""
        corners = np.empty((self.n_cells(k), self.dim))
        axes = []
        for S in self.subsets(k):
            verts = self._block_vertices(S)
            corners[self.block(k, S)] = self.origin + verts * self.spacing
            axes += [S] * verts.shape[0]
        return corners, axes

    def cell_centers(self, k):
        corners, axes = self.cell_geometry(k)
        centers = corners.copy()
        for S in self.subsets(k):
            if S:
                centers[self.block(k, S), list(S)] += 0.5 * self.spacing[list(S)]
        return centers

    def vertices(self):
        return self.cell_geometry(0)[0]

    def shift_permutation(self, k, axis, steps):
        """Index map of a cyclic grid rotation by ``steps`` cells along ``axis``.

        ``c_rotated = c[perm]`` is the cochain pulled back by the rotation.
        """
        if not self.periodic[axis]:
            raise ConfigurationError("can only rotate a periodic axis")
        perm = np.empty(self.n_cells(k), dtype=np.int64)
        for S in self.subsets(k):
            verts = self._block_vertices(S)
            moved = verts.copy()
            moved[:, axis] = (moved[:, axis] + steps) % self.shape[axis]
            perm[self.block(k, S)] = np.ravel_multi_index(moved.T, self.block_shape(S)) + self.block(k, S).start
        return perm

    def harmonic_basis(self, k):
        """Block indicators spanning the harmonic k-cochains of a periodic torus."""
        if not self.fully_periodic:
            raise ConfigurationError("harmonic basis only implemented for fully periodic fibres")
        subsets = self.subsets(k)
        rows = np.arange(self.n_cells(k))
        cols = np.empty(self.n_cells(k), dtype=np.int64)
        for j, S in enumerate(subsets):
            cols[self.block(k, S)] = j
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.n_cells(k), len(subsets)))
