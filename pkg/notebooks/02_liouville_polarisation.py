"""
Liouville form and polarisation on the cylinder
===============================================

For ``omega = c(b) dtheta ^ dr`` with ``c(b) = 1 + 0.5 sin b`` and the zero
section as ``L``, the homotopy operator gives ``lambda = -c(b) r dtheta``
and the Liouville field is the radial field ``r d/dr``.
"""
import numpy as np

from weinfib import models, poincare
from weinfib import polarization as pol
from weinfib.fibred_forms import torus_points

m = models.cylinder(0.5)
L = m.zero_section()

# %% [markdown]
# Liouville form by the fibred homotopy operator (Gauss-Legendre, 12 nodes).

# %%
lam = poincare.liouville_from_symplectic(m, L)
pts, _ = poincare.tubular_points(m, L, 6)
b = m.base.samples[2]
print("max |lambda + c(b) r dtheta| =", np.max(np.abs(lam(b, pts)[:, 0] + m.c(b) * pts[:, 1])))
print(poincare.liouville_report(m, L, lam))

# %% [markdown]
# The Liouville field and the spectral split of its Jacobian along ``L``:
# eigenvalue 0 is tangent to ``L``, eigenvalue 1 is the isotropic complement.

# %%
Y = pol.liouville_field(m, lam)
q = torus_points(1, 64)
splits = pol.jacobian_split(Y, b, L.point(b, q), L, q)
print(pol.split_summary(splits))

# %% [markdown]
# Flowing backwards along ``Y`` scales ``omega`` by ``exp(-t)``.

# %%
pts, _ = poincare.tubular_points(m, L, 3, shrink=0.5)
conf = pol.conformal_check(m, Y, b, pts, t_max=1.0, h=1e-3)
for t, r in conf["table"]:
    print(f"t = {t:.2f}  residual = {r:.2e}")
