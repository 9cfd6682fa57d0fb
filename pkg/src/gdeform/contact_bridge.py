"""Projective surfaces and their contact lifts in Lie sphere geometry R^{3,3}.

A point line F of P(R^4) and its tangent plane F1 give the null plane
f = F ^ F1 of ^2 R^4, which carries the volume pairing of signature (3,3).
sl(4) acts there by phi(A)(v^w) = Av^w + v^Aw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import deform_core as dc
from . import jetcalc as jc
from .geometries import (
    GeometrySpec,
    LegendreSurface,
    ProjectiveSurface,
    legendre_from_sections,
    wedge_jet,
)
from .multilinear import ORTHOGONAL, PLUCKER_TO_R33, sl4_to_o33, span_residual, subspace_distance, wedge

R33 = GeometrySpec.lie_sphere(3, 3)


def phi(A):
    """sl(4) -> o(3,3) in canonical coordinates."""
    return sl4_to_o33(A)


def _to_r33(j):
    return j.apply(lambda c: c @ PLUCKER_TO_R33.T)


@dataclass
class BridgeContext:
    projective: ProjectiveSurface
    lie: LegendreSurface

    def f_matches(self, points, tol=1e-10):
        """max subspace distance between f and B(F ^ F1) at the given points."""
        return max_subspace_gap(self.lie.sections(points, 0).value,
                                _wedge_F_F1(self.projective, points))


def _wedge_F_F1(proj, points):
    s = proj.point_jet(points, 1)
    ws = [wedge(s.value, s.deriv(1, 0)), wedge(s.value, s.deriv(0, 1))]
    return np.stack(ws, axis=1) @ PLUCKER_TO_R33.T


def max_subspace_gap(A, B):
    """Largest subspace distance between row spans A[p] and B[p]."""
    return max(subspace_distance(a.T, b.T) for a, b in zip(A, B))


def contact_lift(proj: ProjectiveSurface, label="") -> LegendreSurface:
    """f = F ^ F1, spanned by sigma^sigma_u and sigma^sigma_v, in canonical R^{3,3}."""

    def sections(points, degree):
        s = proj.point_jet(points, degree + 1)
        s0 = s.truncate(degree)
        a = _to_r33(wedge_jet(s0, s.d(0)))
        b = _to_r33(wedge_jet(s0, s.d(1)))
        return jc.stack([a, b], axis=1)

    ls = legendre_from_sections(R33, sections, proj.expr, proj.grid, label or f"contact lift of {proj.label}")
    ls.projective = proj
    pts = ls.interior_points()
    if pts is not None:
        ls.checks["f1_formula"] = derived_bundle_gap(ls, pts)
    return ls


def derived_bundle_gap(ls: LegendreSurface, points):
    """Distance between f1 = span(f, df) and B(F1^F1 + F^R^4), pointwise maximum."""
    proj = ls.projective
    s = proj.point_jet(points, 2)
    sig, su, sv, suv = s.value, s.deriv(1, 0), s.deriv(0, 1), s.deriv(1, 1)
    formula = np.stack([wedge(sig, su), wedge(sig, sv), wedge(su, sv), wedge(sig, suv)], axis=1) @ PLUCKER_TO_R33.T
    S = ls.sections(points, 1)
    f1 = np.concatenate([S.value, S.d(0).value, S.d(1).value], axis=1)
    # orthonormal rank-4 span of f1
    _, _, vt = np.linalg.svd(f1, full_matrices=False)
    return max_subspace_gap(vt[:, :4], formula)


def transfer_form(form, ls_projective=None, points=None, tol=1e-10):
    """phi applied pointwise to a Theta-valued form.

    When a projective surface and points are given the input is checked to
    be Theta-valued; offending points raise.
    """
    if ls_projective is not None and points is not None:
        bad = ls_projective.admissible_residual(form, points)
        if np.max(bad) > tol:
            i = int(np.argmax(bad))
            raise ValueError(f"form is not Theta-valued at {tuple(np.asarray(points)[i])} (residual {bad[i]:.2e})")

    def build(pts, degree):
        return form.jets(pts, degree).apply(phi)

    return dc.AlgValuedOneForm(build, 6, ORTHOGONAL, R33.gram, f"phi({form.label})",
                               {"source": "transfer", "from": form.provenance})


def subspace_images(ls_proj: ProjectiveSurface, ls_lie: LegendreSurface, points):
    """Distances between phi(Theta), f^f-perp and between phi(Psi), ^2 f at each point."""
    theta = ls_proj.admissible_basis(points, 0).value
    psi = ls_proj.trivial_basis(points, 0).value
    adm = ls_lie.admissible_basis(points, 0).value
    triv = ls_lie.trivial_basis(points, 0).value
    out = []
    for img, tgt in ((phi(theta), adm), (phi(psi), triv)):
        P = len(points)
        A = img.reshape(P, img.shape[1], -1)
        B = tgt.reshape(P, tgt.shape[1], -1)
        gaps = []
        for a, b in zip(A, B):
            _, s, vt = np.linalg.svd(a, full_matrices=False)
            ra = int(np.sum(s > 1e-8 * s[0]))
            _, s2, vt2 = np.linalg.svd(b, full_matrices=False)
            rb = int(np.sum(s2 > 1e-8 * s2[0]))
            if ra != rb:
                gaps.append(1.0)
                continue
            gaps.append(subspace_distance(vt[:ra].T, vt2[:rb].T))
        out.append(np.array(gaps))
    return out[0], out[1]


def intertwining_residual(form, points):
    """|d(phi eta) - phi(d eta)| for the coefficient derivatives."""
    J = form.jets(points, 1)
    T = transfer_form(form).jets(points, 1)
    worst = 0.0
    for ax in (0, 1):
        worst = max(worst, float(np.max(np.abs(T.d(ax).value - phi(J.d(ax).value)))))
    return worst


def curvature_vs_asymptotic(ls_lie: LegendreSurface, points):
    """Max difference between curvature directions of f and asymptotic directions of F."""
    cs = ls_lie.curvature(points, 2)
    T = np.stack([np.stack([t.value for t in cs.T1], -1), np.stack([t.value for t in cs.T2], -1)], axis=1)
    d, real = ls_lie.projective.asymptotic(points)
    return float(np.max(np.abs(T[real] - d[real]), initial=0.0))


def span_gap(M, basis):
    return span_residual(M, basis)[0]
