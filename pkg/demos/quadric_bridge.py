"""A closed form on the doubly ruled quadric, carried over to its contact lift."""

import numpy as np

from gdeform import contact_bridge as cb
from gdeform import deform_core as dc
from gdeform import geometries as geo
from gdeform.surface_dsl import ParamGrid

grid = ParamGrid((0.2, 1.0), (0.2, 1.0), 12, 12)
proj = geo.projective_lift("quadric", grid)
pts = proj.interior_points()
print(f"admissible bundle rank {proj.checks['theta_dimension']}")

f1, f2 = geo.quadric_closed_forms()
eta = f1 + f2.scaled(0.7)
audit = dc.equivalence_audit(eta, proj, pts, 2)
for r in audit.orders:
    print(f"order {r}: invariant {audit.max_invariant[r]:.2e}, chart {audit.max_chart[r]:.2e}, "
          f"verdicts agree on {audit.agreement[r]:.0%} of points")

lie = cb.contact_lift(proj)
print(f"contact lift: null {lie.checks['f_null']:.1e}, derived bundle formula {lie.checks['f1_formula']:.1e}")
print(f"curvature vs asymptotic directions {cb.curvature_vs_asymptotic(lie, pts):.1e}")

T = cb.transfer_form(eta, proj, pts)
q = geo.quadratic_differential(T, lie, pts)
print(f"transferred closure {dc.closure_residual(T, pts).max():.1e}, max|q| {q.max_abs:.3f}")

triv = proj.random_trivial_form(np.random.default_rng(0))
Tt = cb.transfer_form(triv, proj, pts)
print(f"trivial form: projective verdict {dc.triviality_solve(triv, proj, pts).trivial}, "
      f"Lie verdict {dc.triviality_solve(Tt, lie, pts).trivial}")
