"""Numerical toolkit for fibred symplectic geometry.

Fibrewise exterior calculus on families of tori, a glued Hodge right-inverse
of ``d``, the fibred homotopy operator and Liouville forms, transverse
polarisations, family Weinstein charts with a Lagrangian classifier, and the
fibration/subbundle correspondence.
"""
from .errors import *  # noqa: F401,F403
from .fibred_forms import (CochainForm, FieldForm, VerticalField, VerticalMap, discretize, fibred_d,
                           contract, pullback, lie_derivative, flow, restrict, assemble, torus_points)
from .grids import BaseGrid, FibreComplex
from .fibred_hodge import (build_delta, apply_delta, projection, project_closed, primitive_family,
                           decomposition_report)
from .models import build_model, cylinder, torus2, torus4, product_MxB, named_form, fourier_form
from .poincare import homotopy_P, linear_retraction, liouville_from_symplectic, homotopy_residual
from .polarization import liouville_field, jacobian_split, conformal_check, transverse_leaf
from .weinstein import build_chart, verify_symplectic, subbundle_to_form, is_lagrangian, lagrangianize
from .fibration_space import (FibrationMap, BiFibration, graph_of, submersion_test, lagrangian_fibration_test,
                              psi_reparametrize, psi_inverse)

__version__ = "0.1.0"
