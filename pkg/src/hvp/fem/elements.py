"""C1/C2 Hermite elements on the unit reference cell.

Shape functions attached to derivative DOFs are scaled by powers of the
cell size so that global coefficients are physical derivatives.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import factorial

import numpy as np


@lru_cache(maxsize=None)
def hermite_coefficients(m: int) -> np.ndarray:
    """Monomial coefficients of the 1D Hermite basis on [0, 1].

    Matches derivatives 0..m-1 at both ends; degree 2m-1. Row ordering is
    (end 0, order 0..m-1), (end 1, order 0..m-1). Column j multiplies t**j.
    """
    n = 2 * m
    V = np.zeros((n, n))
    for end, t in enumerate((0.0, 1.0)):
        for r in range(m):
            for j in range(r, n):
                V[end * m + r, j] = factorial(j) / factorial(j - r) * t ** (j - r)
    # basis row b satisfies V @ c_b = e_b
    return np.linalg.solve(V, np.eye(n)).T


def _poly_deriv_eval(coeffs, t, r):
    """Evaluate the r-th derivative of polynomials (rows of coeffs) at t."""
    n = coeffs.shape[1]
    out = np.zeros((coeffs.shape[0],) + np.shape(t))
    for j in range(r, n):
        out += np.multiply.outer(coeffs[:, j] * factorial(j) / factorial(j - r), np.asarray(t) ** (j - r))
    return out


def hermite_1d(m: int, t, h: float, max_order: int = 2):
    """Physical-space derivatives 0..max_order of the scaled 1D Hermite basis.

    Returns array (max_order+1, 2m, *t.shape).
    """
    C = hermite_coefficients(m)
    dof_order = np.tile(np.arange(m), 2)
    scale = h ** dof_order
    return np.stack([(scale[:, None] * _poly_deriv_eval(C, np.ravel(t), r)).reshape((2 * m,) + np.shape(t)) / h**r
                     for r in range(max_order + 1)])


class HermiteElement:
    """Tensor-product Hermite element.

    ``m`` derivative orders per node per axis (m=3: quintic, C2; m=2: cubic, C1).
    Node DOFs are mixed derivatives d^(a1+...+ad) u / dx1^a1 ... with each
    a_j < m_axis, enumerated with the first axis fastest.
    """

    name: str
    dim: int
    m: int

    def __init__(self, name, dim, m):
        self.name, self.dim, self.m = name, dim, m
        self.node_types = [tuple(reversed(t)) for t in itertools.product(range(m), repeat=dim)]
        if dim == 2 and m == 2:
            self.node_types = [(0, 0), (1, 0), (0, 1), (1, 1)]
        self.dofs_per_node = len(self.node_types)
        corners = list(itertools.product((0, 1), repeat=dim))
        corners.sort(key=lambda c: tuple(reversed(c)))
        self.local = [(c, ti) for c in corners for ti in range(self.dofs_per_node)]
        self.degree = 2 * m - 1

    @property
    def nloc(self):
        return len(self.local)

    def evaluate(self, t, h):
        """Basis at reference points t (n, dim) in a cell of size h (dim,).

        Returns dict with 'val' (nloc, n), 'grad' (nloc, n, dim) and
        'hess' (nloc, n, dim, dim).
        """
        t = np.atleast_2d(np.asarray(t, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float), (self.dim,))
        axis = [hermite_1d(self.m, t[:, j], h[j]) for j in range(self.dim)]  # (3, 2m, n)
        n = t.shape[0]
        val = np.empty((self.nloc, n))
        grad = np.empty((self.nloc, n, self.dim))
        hess = np.empty((self.nloc, n, self.dim, self.dim))
        for b, (corner, ti) in enumerate(self.local):
            orders = self.node_types[ti]
            rows = [corner[j] * self.m + orders[j] for j in range(self.dim)]

            def factor(deriv):
                out = np.ones(n)
                for j in range(self.dim):
                    out = out * axis[j][deriv[j], rows[j]]
                return out

            zero = [0] * self.dim
            val[b] = factor(zero)
            for a in range(self.dim):
                d = list(zero)
                d[a] = 1
                grad[b, :, a] = factor(d)
                for c in range(self.dim):
                    dd = list(zero)
                    dd[a] += 1
                    dd[c] += 1
                    hess[b, :, a, c] = factor(dd)
        return {"val": val, "grad": grad, "hess": hess}

    def nodal_values(self, field, x):
        """Node DOF values of a reference field at nodes x (n, dim)."""
        out = np.empty((len(x), self.dofs_per_node), dtype=complex)
        for ti, orders in enumerate(self.node_types):
            total = sum(orders)
            if total == 0:
                out[:, ti] = field.value(x)
            elif total == 1:
                out[:, ti] = field.gradient(x)[:, orders.index(1)]
            elif self.dim == 1 and orders == (2,):
                out[:, ti] = field.laplacian(x)
            elif total == 2:
                idx = [j for j, o in enumerate(orders) for _ in range(o)]
                out[:, ti] = field.hessian(x)[:, idx[0], idx[1]]
            else:
                raise NotImplementedError(f"no nodal functional for derivative {orders}")
        return out


ELEMENTS = {
    "quintic-hermite-1d": lambda: HermiteElement("quintic-hermite-1d", 1, 3),
    "cubic-hermite-1d": lambda: HermiteElement("cubic-hermite-1d", 1, 2),
    "bogner-fox-schmit-2d": lambda: HermiteElement("bogner-fox-schmit-2d", 2, 2),
}


def make_element(name: str) -> HermiteElement:
    try:
        return ELEMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown element {name!r}; choose from {sorted(ELEMENTS)}") from None
