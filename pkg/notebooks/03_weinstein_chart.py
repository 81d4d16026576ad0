"""
Weinstein chart and the Lagrangian classifier
=============================================

The chart sends a covector ``a`` at ``q`` to the end point of the leaf
flows.  On the cylinder with ``c(b) = 1 + 0.5 sin b`` it is exactly
``(q, a / c(b))``.
"""
import numpy as np

from weinfib import fibred_hodge as fh
from weinfib import models, poincare, weinstein
from weinfib.fibred_forms import FieldForm, discretize, torus_points
from weinfib.grids import BaseGrid, FibreComplex

m = models.cylinder(0.5, base_samples=4)
L = m.zero_section()
chart = weinstein.build_chart(m, L, poincare.liouville_from_symplectic(m, L), m.polarisation())
print("radius", chart.radius, "steps", chart.steps)

# %%
b = np.pi / 2
q, a = np.array([[0.3], [2.0]]), np.array([[0.2], [-0.2]])
print(chart.forward(b, q, a))
print("expected", np.hstack([q, a / m.c(b)]))
print(weinstein.verify_symplectic(chart, b, n_probe=100))

# %% [markdown]
# A nearby section ``p = 0.1`` is the graph of the constant covector 0.1.

# %%
near = m.graph(FieldForm.constant(1, 1, [0.1]))
alpha = weinstein.subbundle_to_form(chart, near)
print(alpha(0.0, torus_points(1, 4)).ravel())

# %% [markdown]
# On ``T^2`` the classifier measures ``sup |d alpha|``.  The curl mode
# ``sin q2 dq1`` has defect 1; its cochain version converges at second order.

# %%
curl = models.named_form("sin_t2_dt1")
print(weinstein.is_lagrangian(curl))
for N in (16, 32, 64):
    a = discretize(curl, FibreComplex((N, N)), BaseGrid.uniform(2), "sample")
    print(N, 1 - weinstein.is_lagrangian(a).defect)

# %% [markdown]
# ``lagrangianize`` keeps only the closed part.

# %%
C, g = FibreComplex((64, 64)), BaseGrid.uniform(2)
D = fh.build_delta(C, g, degrees=[1])
fixed = weinstein.lagrangianize(D, discretize(models.named_form("mixed"), C, g))
print("distance to 0.3 dq1:", (fixed - discretize(models.named_form("const"), C, g)).sup_norm())
