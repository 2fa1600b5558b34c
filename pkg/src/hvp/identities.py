"""Rellich and low-order Morawetz integral identities as vanishing residuals.

Both identities are evaluated with the multiplier centred at
``domain.origin`` (x replaced by x - x0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Domain, boundary_quadrature, interior_quadrature


@dataclass
class IdentityReport:
    bulk_terms: dict = field(default_factory=dict)
    boundary_terms: dict = field(default_factory=dict)
    residual: float = 0.0
    relative_residual: float = 0.0

    @classmethod
    def from_terms(cls, bulk, boundary):
        terms = list(bulk.values()) + list(boundary.values())
        residual = float(sum(terms))
        scale = max(abs(t) for t in terms)
        rel = abs(residual) / scale if scale > 0 else 0.0
        return cls(dict(bulk), dict(boundary), residual, rel)

    def to_dict(self):
        return {"bulk_terms": self.bulk_terms, "boundary_terms": self.boundary_terms,
                "residual": self.residual, "relative_residual": self.relative_residual}


def _quads(domain, quad_order, cells):
    return (interior_quadrature(domain, quad_order, cells),
            boundary_quadrature(domain, quad_order, cells))


def rellich_residual(u, k: float, domain: Domain, quad_order: int = 24,
                     cells: int = 1) -> IdentityReport:
    """Sum of the three integrals of the Rellich identity for the multiplier (x - x0).grad u."""
    iq, bq = _quads(domain, quad_order, cells)
    nu = domain.dim
    x0 = np.asarray(domain.origin)

    y = iq.points - x0
    g = u.gradient(iq.points)
    Lu = u.helmholtz(iq.points, k)
    v = u.value(iq.points)
    ydg = np.einsum("nd,nd->n", y, g)
    mixed = iq.weights @ (2.0 * np.real(ydg * np.conj(Lu)))
    g2 = np.sum(np.abs(g) ** 2, axis=1)
    second = iq.weights @ ((nu - 2) * g2 - nu * k**2 * np.abs(v) ** 2)

    yb = bq.points - x0
    gb = u.gradient(bq.points)
    vb = u.value(bq.points)
    yn = np.einsum("nd,nd->n", yb, bq.normals)
    y_conj_g = np.einsum("nd,nd->n", yb, np.conj(gb))
    dn = np.einsum("nd,nd->n", gb, bq.normals)
    gb2 = np.sum(np.abs(gb) ** 2, axis=1)
    boundary = bq.weights @ (2.0 * np.real(y_conj_g * dn) - gb2 * yn + k**2 * np.abs(vb) ** 2 * yn)

    return IdentityReport.from_terms(
        {"mixed": float(mixed), "gradient_mass": float(second)},
        {"boundary": float(boundary)},
    )


def low_order_morawetz_residual(u, k: float, beta: float, domain: Domain,
                                quad_order: int = 24, cells: int = 1) -> IdentityReport:
    """Residual of the identity for the multiplier M0 u = -i k beta u."""
    iq, bq = _quads(domain, quad_order, cells)
    v = u.value(iq.points)
    M0 = -1j * k * beta * v
    bulk = iq.weights @ (2.0 * np.real(np.conj(M0) * u.helmholtz(iq.points, k)))

    vb = u.value(bq.points)
    imp = u.impedance_residual(bq.points, bq.normals, k)
    mass = -2.0 * k**2 * beta * (bq.weights @ np.abs(vb) ** 2)
    cross = 2.0 * np.real(bq.weights @ (1j * k * beta * np.conj(vb) * imp))
    return IdentityReport.from_terms(
        {"multiplier": float(bulk)},
        {"boundary_mass": float(mass), "boundary_impedance": float(cross)},
    )


def field_battery(dim: int, k: float = 5.0) -> dict:
    """Closed-form test fields: constants, polynomials to degree 4, plane waves, Gaussians."""
    from .fields import Constant, GaussianBump, PlaneWave, Polynomial

    if dim == 1:
        polys = {
            "linear": {(1,): 1.0, (0,): 0.5},
            "quadratic": {(2,): 1.0 - 0.5j, (1,): 0.3},
            "cubic": {(3,): 0.7, (1,): -1.0j},
            "quartic": {(4,): 1.0, (2,): -0.4, (0,): 0.1j},
        }
        waves = {"plane-wave": PlaneWave([1.0], k), "plane-wave-left": PlaneWave([-1.0], k, 0.5j),
                 "plane-wave-k10": PlaneWave([1.0], 10.0)}
        centres = ([0.4], [0.7])
    else:
        polys = {
            "linear": {(1, 0): 1.0, (0, 1): -0.5j},
            "quadratic": {(2, 0): 1.0, (1, 1): 0.5, (0, 2): -1.0j},
            "cubic": {(3, 0): 0.2, (1, 2): 1.0j, (0, 1): 0.3},
            "quartic": {(4, 0): 1.0, (2, 2): -0.6, (0, 4): 0.3j, (1, 1): 0.2},
        }
        waves = {"plane-wave": PlaneWave([1.0, 0.0], k),
                 "plane-wave-oblique": PlaneWave([0.6, 0.8], k, 1.0 - 1.0j),
                 "plane-wave-k10": PlaneWave([-0.28, 0.96], 10.0)}
        centres = ([0.4, 0.55], [0.7, 0.3])
    out = {"constant": Constant(1.0 + 0.5j, dim)}
    out.update({name: Polynomial(t) for name, t in polys.items()})
    out.update(waves)
    out["gaussian"] = GaussianBump(centres[0], 0.05)
    out["gaussian-offset"] = GaussianBump(centres[1], 0.04, 2.0 - 1.0j)
    return out
