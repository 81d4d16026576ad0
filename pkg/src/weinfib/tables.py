"""Versioned column-table files for sampled forms and fields.

Layout (comma separated, UTF-8)::

    # weinfib-table v1
    degree,backend,base_index,cell_index,value
    1,cochain,0,0,0.19634954084936207
    ...

Values are written with 17 significant digits so that reading a file back
reproduces the doubles bit for bit.  For field forms the cell index enumerates
``point * n_components + component`` over the sampled fibre points.
"""
import csv
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .fibred_forms import CochainForm

TABLE_VERSION = 1
HEADER = ["degree", "backend", "base_index", "cell_index", "value"]


def _write(path, degree, backend, values):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# weinfib-table v{TABLE_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(HEADER)
        for bi, row in enumerate(values):
            for ci, v in enumerate(row):
                w.writerow([degree, backend, bi, ci, format(float(v), ".17g")])
    return path


def write_table(path, form, base_points=None, fibre_points=None):
    """Write a cochain family, or a field form sampled on the given points."""
    if form.backend == "cochain":
        return _write(path, form.degree, "cochain", form.values)
    if base_points is None or fibre_points is None:
        raise ConfigurationError("field forms need base_points and fibre_points to be tabulated")
    rows = [form(b, fibre_points).ravel() for b in np.atleast_1d(base_points)]
    return _write(path, form.degree, "field", rows)


def write_vectors(path, values, degree=1, backend="field"):
    """Tabulate an arbitrary ``(n_base, n_points, n_components)`` array."""
    values = np.asarray(values, dtype=float)
    return _write(path, degree, backend, values.reshape(values.shape[0], -1))


def read_table(path):
    """Return ``(degree, backend, values)`` with ``values`` of shape ``(n_base, n_cells)``."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        first = fh.readline().strip()
        if first != f"# weinfib-table v{TABLE_VERSION}":
            raise ConfigurationError(f"unsupported table header {first!r}")
        reader = csv.reader(fh)
        if next(reader) != HEADER:
            raise ConfigurationError("unexpected column header")
        rows = [r for r in reader if r]
    if not rows:
        raise ConfigurationError("empty table")
    degrees = {int(r[0]) for r in rows}
    backends = {r[1] for r in rows}
    if len(degrees) != 1 or len(backends) != 1:
        raise ConfigurationError("a table holds exactly one form")
    nb = max(int(r[2]) for r in rows) + 1
    nc = max(int(r[3]) for r in rows) + 1
    values = np.full((nb, nc), np.nan)
    for r in rows:
        values[int(r[2]), int(r[3])] = float(r[4])
    if np.isnan(values).any():
        raise ConfigurationError("table has missing entries")
    return degrees.pop(), backends.pop(), values


def read_cochain(path, complex, base):
    degree, backend, values = read_table(path)
    if backend != "cochain":
        raise ConfigurationError("table does not hold a cochain form")
    return CochainForm(degree, complex, base, values)
