"""Infinitesimal deformations of surfaces in projective, conformal and Lie sphere geometry."""

from .deform_core import AlgValuedOneForm, CertificationError
from .geometries import GeometryError, GeometrySpec, lift
from .surface_dsl import DSLError, ParamGrid, parse, resolve_surface

__version__ = "0.1.0"

__all__ = [
    "AlgValuedOneForm",
    "CertificationError",
    "DSLError",
    "GeometryError",
    "GeometrySpec",
    "ParamGrid",
    "lift",
    "parse",
    "resolve_surface",
]
