"""Reference solutions used to validate the discretisations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InvalidParams, SolveFailure, ValidationError
from .fields import (BoundaryField, ClosedFormField, Constant, Exponential1D, FunctionField,
                     ImpedanceTrace)
from .grid import FieldGrid


def _interval(domain):
    if domain is None:
        return 0.0, 1.0
    if hasattr(domain, "bounds"):
        if domain.dim != 1:
            raise ValidationError("1D oracle needs an interval")
        return domain.bounds[0]
    a, b = domain
    return float(a), float(b)


def exact_1d_constant_forcing(k: float, f_const: complex, domain=None) -> ClosedFormField:
    """Solution of -u'' - k^2 u = f on (a, b) with d_n u = i k u at both ends."""
    if not k > 0:
        raise InvalidParams(f"k must be positive, got {k}")
    a, b = _interval(domain)
    c = complex(f_const) / k**2
    return Exponential1D(-c, [c / 2, c / 2], [1j * k, -1j * k], [a, b])


def energy_minimiser_1d(k: float, gamma1: float, weight: float, f_const: complex,
                        domain=None) -> ClosedFormField:
    """Exact minimiser over H^2(a, b) of the weak-BC energy with constant source.

    ``weight`` multiplies ||d_n u - i k u||^2 in the form (2 gamma2 in energy
    mode). With e = L u - f the Euler-Lagrange system is e + 2 gamma1 L e = 0
    inside and, at each end, W g = 2 gamma1 e and d_n u + 2 gamma1 d_n e + i k W g = 0.
    This is not the Helmholtz solution: the physical term leaves a boundary
    contribution that the Helmholtz solution does not cancel.
    """
    if not gamma1 > 0:
        raise InvalidParams("gamma1 must be positive for an H^2 minimiser")
    a, b = _interval(domain)
    f = complex(f_const)
    mu = np.sqrt(complex(1.0 / (2.0 * gamma1) - k**2))
    rates = np.array([1j * k, -1j * k, mu, -mu])
    shifts = np.array([a, a, a, b])
    # u = -f/k^2 + z0 E0 + z1 E1 - 2 gamma1 (z2 E2 + z3 E3);  e = z2 E2 + z3 E3
    u_scale = np.array([1.0, 1.0, -2.0 * gamma1, -2.0 * gamma1])
    e_mask = np.array([0.0, 0.0, 1.0, 1.0])
    A = np.zeros((4, 4), dtype=complex)
    rhs = np.zeros(4, dtype=complex)
    u_const = -f / k**2
    for row, (x, n) in enumerate(((a, -1.0), (b, 1.0))):
        E = np.exp(rates * (x - shifts))
        u, du = u_scale * E, u_scale * rates * E
        e, de = e_mask * E, e_mask * rates * E
        g = n * du - 1j * k * u
        g_const = -1j * k * u_const
        A[2 * row] = weight * g - 2.0 * gamma1 * e
        rhs[2 * row] = -weight * g_const
        A[2 * row + 1] = n * du + 2.0 * gamma1 * n * de + 1j * k * weight * g
        rhs[2 * row + 1] = -1j * k * weight * g_const
    z = np.linalg.solve(A, rhs)
    return Exponential1D(u_const, u_scale * z, rates, shifts)


@dataclass
class GeneralisedData:
    zeta: ClosedFormField
    eta: BoundaryField


def manufactured_generalised(u_star: ClosedFormField, k: float) -> GeneralisedData:
    """Source data (zeta, eta) for which u_star solves the generalised impedance problem."""
    zeta = FunctionField(lambda x: u_star.helmholtz(x, k), dim=getattr(u_star, "dim", None))
    return GeneralisedData(zeta, ImpedanceTrace(u_star, k))


def fd_reference_1d(k: float, f, n_nodes: int, domain=None) -> FieldGrid:
    """Second-order finite differences with one-sided second-order impedance closures."""
    if n_nodes < 3:
        raise ValidationError("need at least 3 nodes")
    a, b = _interval(domain)
    x = np.linspace(a, b, n_nodes)
    h = x[1] - x[0]
    if isinstance(f, ClosedFormField):
        fx = np.asarray(f.value(x[:, None]), dtype=complex)
    else:
        fx = np.full(n_nodes, complex(f if f is not None else 0.0))
    main = np.full(n_nodes, 2.0 / h**2 - k**2, dtype=complex)
    off = np.full(n_nodes - 1, -1.0 / h**2, dtype=complex)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    rhs = fx.copy()
    # -u'(a) = i k u(a), u'(b) = i k u(b)
    A[0, :3] = [3.0 / (2 * h) - 1j * k, -4.0 / (2 * h), 1.0 / (2 * h)]
    A[-1, -3:] = [1.0 / (2 * h), -4.0 / (2 * h), 3.0 / (2 * h) - 1j * k]
    rhs[0] = rhs[-1] = 0.0
    A = A.tocsc()
    u = spla.spsolve(A, rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    res = np.linalg.norm(A @ u - rhs) / scale
    if not np.all(np.isfinite(u)) or (np.linalg.norm(rhs) > 0 and res > 1e-8):
        raise SolveFailure(f"finite-difference residual {res:.2e}")
    return FieldGrid([x], u)


CASES = {
    "1d-constant": lambda k, f=1.0: exact_1d_constant_forcing(k, f),
}


