"""The cylinder is isothermic: its closed form deforms it to second order, not third."""

import numpy as np

from gdeform import deform_core as dc
from gdeform import geometries as geo
from gdeform.surface_dsl import ParamGrid

grid = ParamGrid((0.1, 2.0), (-0.5, 0.5), 16, 16)
ls = geo.conformal_lift("cylinder", grid)
pts = ls.interior_points()
form = dc.isothermic_form_builder(ls)
print(f"closure    {dc.closure_residual(form, pts).max():.2e}")
print(f"containment {ls.admissible_residual(form, pts).max():.2e}")

for r in range(3):
    inv = dc.invariant_condition_residual(form, ls, pts, r).max()
    print(f"order-{r} invariant residual {inv:.2e}")

gm = dc.integrate_gauge(form, grid)
print(f"gauge path defect {gm.path_defect:.2e}")
for p in pts[::40]:
    pr = dc.contact_order_probe(ls, gm, p, 2)
    print(f"probe at ({p[0]:.2f}, {p[1]:.2f}): ratio {pr.ratio:.3f}, contact order ~ {pr.order_estimate:.2f}")

audit = geo.third_order_audit(ls, form)
print(f"third order ratio {audit.third_order_ratio:.3f}; first failing link: {audit.first_failing_link}")
print(f"trivial? {dc.triviality_solve(form, ls, pts).trivial}")
