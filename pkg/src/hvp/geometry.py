"""Box domains, their geometric constants, and Gauss-Legendre quadrature."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import NonStarShaped, ValidationError

KINDS = {1: "interval", 2: "rectangle", 3: "box"}


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Gauss-Legendre nodes and weights on [0, 1] with `order` points."""
    if order < 1:
        raise ValidationError(f"quadrature order must be >= 1, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def tensor_rule(lo, hi, order, cells=1):
    """Composite tensor-product Gauss rule on the box [lo, hi].

    Each axis is split into `cells` (an int or one per axis) equal pieces
    carrying an `order`-point rule. Returns (points (n, dim), weights (n,)).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    t, w = gauss_legendre(order)
    cells = np.broadcast_to(np.asarray(cells, dtype=int), lo.shape)
    axes_x, axes_w = [], []
    for a, b, nc in zip(lo, hi, cells):
        edges = np.linspace(a, b, nc + 1)
        hcell = np.diff(edges)
        axes_x.append((edges[:-1, None] + hcell[:, None] * t[None, :]).ravel())
        axes_w.append((hcell[:, None] * w[None, :]).ravel())
    if len(axes_x) == 0:
        return np.zeros((1, 0)), np.ones(1)
    grids = np.meshgrid(*axes_x, indexing="ij")
    wgrids = np.meshgrid(*axes_w, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


@dataclass(frozen=True)
class InteriorQuadrature:
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class BoundaryQuadrature:
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box in 1, 2 or 3 dimensions.

    `origin` is the centre x0 of the multiplier x - x0 used by the Rellich
    and Morawetz identities. It defaults to the box centre.
    """

    bounds: tuple
    origin: tuple = None
    kind: str = field(init=False)

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not 1 <= len(bounds) <= 3:
            raise ValidationError("domains must have 1, 2 or 3 axes")
        for lo, hi in bounds:
            if not lo < hi:
                raise ValidationError(f"empty axis ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "kind", KINDS[len(bounds)])
        if self.origin is None or (isinstance(self.origin, str) and self.origin == "center"):
            origin = tuple(0.5 * (lo + hi) for lo, hi in bounds)
        else:
            origin = tuple(float(c) for c in np.atleast_1d(self.origin))
        if len(origin) != len(bounds):
            raise ValidationError("origin dimension does not match bounds")
        if not all(lo < c < hi for c, (lo, hi) in zip(origin, bounds)):
            raise ValidationError("origin must lie strictly inside the domain")
        object.__setattr__(self, "origin", origin)

    @classmethod
    def interval(cls, a=0.0, b=1.0, origin=None):
        return cls(((a, b),), origin)

    @classmethod
    def unit_square(cls, origin=None):
        return cls(((0.0, 1.0), (0.0, 1.0)), origin)

    @classmethod
    def unit_cube(cls, origin=None):
        return cls(((0.0, 1.0),) * 3, origin)

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        bounds = d["bounds"]
        if kind is not None and KINDS.get(len(bounds)) != kind:
            raise ValidationError(f"kind {kind!r} does not match {len(bounds)} axes")
        return cls(tuple(tuple(b) for b in bounds), d.get("origin", "center"))

    def to_dict(self):
        return {"kind": self.kind, "bounds": [list(b) for b in self.bounds],
                "origin": list(self.origin)}

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lo(self):
        return np.array([b[0] for b in self.bounds])

    @property
    def hi(self):
        return np.array([b[1] for b in self.bounds])

    @property
    def extents(self):
        return self.hi - self.lo

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    @property
    def boundary_measure(self) -> float:
        if self.dim == 1:
            return 2.0
        ext = self.extents
        return float(sum(2.0 * np.prod(np.delete(ext, a)) for a in range(self.dim)))

    def faces(self):
        """Yield (axis, side, normal) for each face; side is 0 (lo) or 1 (hi)."""
        for axis in range(self.dim):
            for side in (0, 1):
                n = np.zeros(self.dim)
                n[axis] = 1.0 if side else -1.0
                yield axis, side, n

    def face_measures(self):
        ext = self.extents
        return np.array([np.prod(np.delete(ext, axis)) for axis, _, _ in self.faces()])

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(x)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=1)


def diameter(domain: Domain) -> float:
    return float(np.linalg.norm(domain.extents))


def star_shape_constant(domain: Domain) -> float:
    """min over the boundary of (x - origin).n, i.e. distance to the nearest face plane."""
    c = np.asarray(domain.origin)
    L0 = float(min(np.min(c - domain.lo), np.min(domain.hi - c)))
    if L0 <= 0:
        raise NonStarShaped(f"origin {domain.origin} gives L0 = {L0}")
    return L0


def interior_quadrature(domain: Domain, order: int, cells: int = 1) -> InteriorQuadrature:
    pts, wts = tensor_rule(domain.lo, domain.hi, order, cells)
    return InteriorQuadrature(pts, wts)


def boundary_quadrature(domain: Domain, order: int, cells: int = 1) -> BoundaryQuadrature:
    """Per-face Gauss rule; in 1D the two endpoints with unit weights."""
    if order < 1:
        raise ValidationError(f"quadrature order must be >= 1, got {order}")
    pts, nrm, wts = [], [], []
    lo, hi = domain.lo, domain.hi
    for axis, side, n in domain.faces():
        others = [a for a in range(domain.dim) if a != axis]
        cells_f = np.delete(np.broadcast_to(np.asarray(cells), (domain.dim,)), axis)
        fp, fw = tensor_rule(lo[others], hi[others], order, cells_f)
        p = np.empty((len(fw), domain.dim))
        p[:, others] = fp
        p[:, axis] = hi[axis] if side else lo[axis]
        pts.append(p)
        nrm.append(np.tile(n, (len(fw), 1)))
        wts.append(fw)
    return BoundaryQuadrature(np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts))


def sample_interior(domain: Domain, n: int, rng) -> np.ndarray:
    return domain.lo + rng.random((n, domain.dim)) * domain.extents


def sample_boundary(domain: Domain, n: int, rng):
    """Uniform samples on the boundary: face chosen proportional to its measure."""
    faces = list(domain.faces())
    meas = domain.face_measures()
    idx = rng.choice(len(faces), size=n, p=meas / meas.sum())
    x = sample_interior(domain, n, rng)
    normals = np.empty((n, domain.dim))
    for i, (axis, side, nvec) in enumerate(faces):
        sel = idx == i
        x[sel, axis] = domain.hi[axis] if side else domain.lo[axis]
        normals[sel] = nvec
    return x, normals


def corners(domain: Domain):
    return np.array(list(itertools.product(*domain.bounds)))
