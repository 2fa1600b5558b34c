"""H2-conforming Galerkin discretisation on structured box meshes."""

from .assembly import (FemSystem, assemble, assemble_components, default_quad_order,
                       error_norms, form_against_basis, galerkin_defect, mesh_quadratures, solve)
from .elements import ELEMENTS, HermiteElement, make_element
from .space import FemField, FemSpace, build_space

__all__ = [
    "ELEMENTS", "FemField", "FemSpace", "FemSystem", "HermiteElement", "assemble",
    "assemble_components", "build_space", "default_quad_order", "error_norms",
    "form_against_basis", "galerkin_defect", "make_element", "mesh_quadratures", "solve",
]
