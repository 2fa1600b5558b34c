"""Uniform structured meshes carrying Hermite elements, and fields on them."""

from __future__ import annotations

import numpy as np

from ..exceptions import IncompatibleMesh
from ..fields import ClosedFormField
from ..geometry import Domain
from .elements import HermiteElement, make_element

DEFAULT_ELEMENT = {1: "quintic-hermite-1d", 2: "bogner-fox-schmit-2d"}


class FemSpace:
    """H2-conforming space on a uniform tensor mesh of a box.

    Global DOFs are node-major: dof = dofs_per_node * node + type, with
    nodes numbered C-order over the (n1+1, ..., nd+1) grid.
    """

    def __init__(self, domain: Domain, h, element: HermiteElement):
        if element.dim != domain.dim:
            raise IncompatibleMesh(f"element {element.name} is {element.dim}D, domain is {domain.dim}D")
        self.domain = domain
        self.element = element
        ext = domain.extents
        h = np.broadcast_to(np.asarray(h, dtype=float), ext.shape)
        n = ext / h
        ncell = np.rint(n).astype(int)
        if np.any(ncell < 1) or np.any(np.abs(n - ncell) > 1e-9 * np.maximum(1, n)):
            raise IncompatibleMesh(f"cell size {h} does not divide extents {ext}")
        self.ncells = tuple(int(c) for c in ncell)
        self.h = ext / ncell
        self.nnodes = tuple(c + 1 for c in self.ncells)
        self.ndof = int(np.prod(self.nnodes)) * element.dofs_per_node

        cells = np.indices(self.ncells).reshape(domain.dim, -1).T
        self.cell_index = cells
        loc = np.empty((len(cells), element.nloc), dtype=np.int64)
        for b, (corner, ti) in enumerate(element.local):
            node = np.ravel_multi_index(tuple((cells + np.array(corner)).T), self.nnodes)
            loc[:, b] = element.dofs_per_node * node + ti
        self.cell_dofs = loc

    @property
    def dim(self):
        return self.domain.dim

    @property
    def hmax(self) -> float:
        return float(np.max(self.h))

    def nodes(self):
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.domain.bounds, self.nnodes)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def cell_origin(self, cells=None):
        cells = self.cell_index if cells is None else cells
        return self.domain.lo + cells * self.h

    def locate(self, x):
        """Cell multi-index and reference coordinates for points x (n, dim)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = (x - self.domain.lo) / self.h
        idx = np.clip(np.floor(s).astype(int), 0, np.array(self.ncells) - 1)
        return idx, s - idx

    def flat_cell(self, idx):
        return np.ravel_multi_index(tuple(idx.T), self.ncells)

    def interpolate(self, field: ClosedFormField) -> np.ndarray:
        """Nodal interpolant coefficients of a field with analytic derivatives."""
        vals = self.element.nodal_values(field, self.nodes())
        return vals.reshape(-1)

    def field(self, coeffs) -> "FemField":
        return FemField(self, coeffs)


def build_space(domain: Domain, h, element: str | None = None) -> FemSpace:
    name = element or DEFAULT_ELEMENT.get(domain.dim)
    if name is None:
        raise IncompatibleMesh(f"no H2 element available in {domain.dim}D")
    return FemSpace(domain, h, make_element(name))


class FemField(ClosedFormField):
    """A discrete field u_h = sum_i c_i phi_i evaluated pointwise."""

    def __init__(self, space: FemSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (space.ndof,):
            raise ValueError(f"expected {space.ndof} coefficients, got {coeffs.shape}")
        self.space, self.coeffs = space, coeffs
        self.dim = space.dim
        self._cache = None

    def _eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._cache is not None and self._cache[0].shape == x.shape and np.array_equal(self._cache[0], x):
            return self._cache[1]
        idx, t = self.space.locate(x)
        basis = self.space.element.evaluate(t, self.space.h)
        c = self.coeffs[self.space.cell_dofs[self.space.flat_cell(idx)]]  # (n, nloc)
        out = {
            "val": np.einsum("nb,bn->n", c, basis["val"]),
            "grad": np.einsum("nb,bnd->nd", c, basis["grad"]),
            "hess": np.einsum("nb,bnde->nde", c, basis["hess"]),
        }
        self._cache = (x.copy(), out)
        return out

    def value(self, x):
        return self._eval(x)["val"]

    def gradient(self, x):
        return self._eval(x)["grad"]

    def hessian(self, x):
        return self._eval(x)["hess"]
