"""
Fibrations, Lagrangian fibres and the section reparametrisation
===============================================================

Submersion checks for ``theta + a sin theta``, the isotropy table of three
coordinate projections of ``T^4`` and the reparametrisation of sections of a
bi-fibred torus.
"""
import numpy as np

from weinfib import fibration_space as fs
from weinfib import models

# %%
for a in (0.0, 0.5, 1.0):
    pi = fs.FibrationMap(lambda x, a=a: x[:, :1] + a * np.sin(x[:, :1]), 2, 1)
    rep = fs.submersion_test(pi)
    print(f"a = {a}: submersion {rep.passed}, sigma_min = {rep.sigma_min:.3e}")

# %% [markdown]
# Projections of ``T^4`` with ``omega = dq1^dp1 + dq2^dp2``, coordinates
# ``(q1, q2, p1, p2)``.  Fibres of ``(q1, q2)`` and ``(q1, p2)`` are
# Lagrangian, the fibres of ``(q1, p1)`` are symplectic.

# %%
omega = models.product_MxB(base_samples=1)
for axes in ((0, 1), (0, 3), (0, 2)):
    pi = fs.projection_map(axes, 4)
    direct = fs.lagrangian_fibration_test(lambda x: omega.omega_matrix(0.0, x), pi)
    chart = fs.weinstein_fibre_verdict(pi)
    print(axes, direct.lagrangian, direct.defect, chart.lagrangian)

# %% [markdown]
# Reparametrise a section of the first projection so that it becomes a
# section of the second, then go back.

# %%
bf = fs.BiFibration.torus(256)
sec = bf.section(0, lambda x: np.stack([x, x + 0.1 * np.sin(x)], axis=-1))
rep = fs.psi_reparametrize(sec)
print("graph defect", rep.graph_defect, "Newton iterations", rep.max_iterations)
print("round trip", fs.roundtrip_residual(sec))
