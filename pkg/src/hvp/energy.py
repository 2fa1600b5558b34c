"""Energy functionals, sesquilinear forms, norms and coercivity constants.

Notation: L u = -Lap u - k^2 u, g(u) = d_n u - i k u on the boundary, and
the multiplier centre is ``domain.origin``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .exceptions import InvalidParams, NoAdmissibleAlpha
from .fields import Constant
from .geometry import (Domain, boundary_quadrature, diameter, interior_quadrature,
                       star_shape_constant)

TERMS = ("residual", "grad", "mass", "bgrad", "bmass", "bimp")


@dataclass(frozen=True)
class EnergyParams:
    k: float
    gamma1: float
    gamma2: float
    alpha: float
    beta: float
    eps1: float
    eps2: float
    eps3: float
    L: float
    L0: float
    nu: int

    def __post_init__(self):
        if not self.k > 0:
            raise InvalidParams(f"k must be positive, got {self.k}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidParams("gamma1, gamma2 must be non-negative")
        if not self.alpha > 0.5:
            raise InvalidParams(f"alpha must exceed 1/2, got {self.alpha}")
        lo, hi = admissible_alpha(self.nu)
        if not self.alpha < hi:
            raise InvalidParams(f"alpha must be below {hi} for nu={self.nu}")
        if min(self.eps1, self.eps2, self.eps3) <= 0:
            raise InvalidParams("eps1, eps2, eps3 must be positive")
        if not 0 < self.L0 <= self.L:
            raise InvalidParams(f"need 0 < L0 <= L, got L0={self.L0}, L={self.L}")

    @property
    def eps4(self) -> float:
        # bulk Young parameter of the weak-BC argument, fixed so the k^2||u||^2
        # coefficient is (alpha - 1/2) nu / 2
        return (self.alpha - 0.5) * self.nu / 2.0

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return EnergyParams(**d)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidParams(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class CoercivityCoefficients:
    """Lower-bound coefficients, already divided by nu.

    The bound reads F(u) >= residual*||Lu||^2 + grad*||grad u||^2
    + mass*k^2||u||^2 + bgrad*||grad u||_b^2 + bmass*k^2||u||_b^2
    + bimp*||g(u)||_b^2. ``bimp`` is None for the strongly imposed case.
    """

    residual: float
    grad: float
    mass: float
    bgrad: float
    bmass: float
    bimp: float | None
    nu: int

    def as_dict(self):
        return {t: getattr(self, t) for t in TERMS if getattr(self, t) is not None}

    def times_nu(self):
        """Coefficients of the bound on nu * F (the form the constants are usually quoted in)."""
        return {t: self.nu * c for t, c in self.as_dict().items()}

    @property
    def coercive(self) -> bool:
        return all(c > 0 for c in self.as_dict().values())

    def bound(self, seminorms: dict) -> float:
        return float(sum(c * seminorms[t] for t, c in self.as_dict().items()))


def admissible_alpha(nu: int):
    """Open interval of alpha keeping both low-order bulk coefficients positive."""
    hi = nu / (2.0 * (nu - 2)) if nu >= 3 else math.inf
    if not hi > 0.5:
        raise NoAdmissibleAlpha(f"no admissible alpha for nu={nu}")
    return 0.5, hi


def _bulk_common(p: EnergyParams, gamma: float):
    nu, a = p.nu, p.alpha
    residual = nu * gamma - a**2 * p.L**2 / p.eps1 - 2.0 * p.beta**2 / ((a - 0.5) * nu)
    grad = nu / 2.0 - a * (nu - 2) - p.eps1
    mass = 0.5 * (a - 0.5) * nu
    return residual, grad, mass


def coercivity_coefficients_strong(p: EnergyParams) -> CoercivityCoefficients:
    """Bound for E_gamma (impedance imposed exactly), gamma = gamma1.

    The boundary Young step is parameterised by eps2; eps2 = L0/2 gives the
    classical 2 alpha L^2 / L0 boundary-mass loss.
    """
    if not p.alpha > 0.5:
        raise InvalidParams("alpha must exceed 1/2")
    residual, grad, mass = _bulk_common(p, p.gamma1)
    bgrad = p.alpha * p.L0 - p.alpha * p.eps2
    bmass = 2.0 * p.beta - p.alpha * p.L - p.alpha * p.L**2 / p.eps2
    nu = p.nu
    return CoercivityCoefficients(residual / nu, grad / nu, mass / nu, bgrad / nu,
                                  bmass / nu, None, nu)


def coercivity_coefficients_weak(p: EnergyParams) -> CoercivityCoefficients:
    """Bound for F_gamma (impedance penalised with gamma2)."""
    if not p.alpha > 0.5:
        raise InvalidParams("alpha must exceed 1/2")
    residual, grad, mass = _bulk_common(p, p.gamma1)
    a, L = p.alpha, p.L
    bgrad = a * p.L0 - a * L**2 * p.eps3 - a * p.eps2
    bmass = 2.0 * p.beta - a * L - a * L**2 / p.eps2
    bimp = p.nu * p.gamma2 - a / p.eps3
    nu = p.nu
    return CoercivityCoefficients(residual / nu, grad / nu, mass / nu, bgrad / nu,
                                  bmass / nu, bimp / nu, nu)


def gamma_thresholds(p: EnergyParams) -> dict:
    """Smallest gamma1 (resp. gamma2) at which the residual (resp. impedance) coefficient vanishes."""
    nu, a = p.nu, p.alpha
    g1 = (a**2 * p.L**2 / p.eps1 + 2.0 * p.beta**2 / ((a - 0.5) * nu)) / nu
    g2 = a / (p.eps3 * nu)
    return {"gamma0": g1, "gamma1_0": g1, "gamma2_0": g2}


_PAPER_DEFAULTS = {
    # alpha, eps1, beta/L, gamma1/L^2, gamma2/L
    2: (1.0, 0.5, 6.2, 39.5, 5.7),
    3: (1.0, 0.25, 7.5, 26.5, 5.0),
    # not tabulated in the source; same recipe for a centred interval (L0 = L/2)
    1: (1.0, 0.25, 4.6, 89.0, 8.5),
}


def select_parameters(nu: int, L: float, L0: float, k: float = 1.0,
                      strategy: str = "paper_defaults", margin: float = 1.05,
                      alpha: float = 1.0, eps1: float | None = None) -> EnergyParams:
    """Return a coercive parameter pack.

    ``paper_defaults`` uses the tabulated square/cube constants (valid for a
    domain centred at its multiplier origin). ``custom`` takes alpha and eps1
    and sets beta, gamma2, gamma1 at ``margin`` times their thresholds.
    """
    if nu not in (1, 2, 3):
        raise InvalidParams(f"nu must be 1, 2 or 3, got {nu}")
    admissible_alpha(nu)
    eps2, eps3 = L0 / 4.0, L0 / (4.0 * L**2)
    if strategy == "paper_defaults":
        a, e1, b, g1, g2 = _PAPER_DEFAULTS[nu]
        p = EnergyParams(k=k, gamma1=g1 * L**2, gamma2=g2 * L, alpha=a, beta=b * L,
                         eps1=e1, eps2=eps2, eps3=eps3, L=L, L0=L0, nu=nu)
    elif strategy == "custom":
        if eps1 is None:
            eps1 = 0.5 * (nu / 2.0 - alpha * (nu - 2))
        beta = margin * (alpha * L / 2.0 + 2.0 * alpha * L**2 / L0)
        gamma2 = margin * 4.0 * alpha * L**2 / (nu * L0)
        gamma1 = margin * (alpha**2 * L**2 / eps1 + 2.0 * beta**2 / ((alpha - 0.5) * nu)) / nu
        p = EnergyParams(k=k, gamma1=gamma1, gamma2=gamma2, alpha=alpha, beta=beta,
                         eps1=eps1, eps2=eps2, eps3=eps3, L=L, L0=L0, nu=nu)
    else:
        raise InvalidParams(f"unknown strategy {strategy!r}")
    if not coercivity_coefficients_weak(p).coercive:
        raise InvalidParams(f"{strategy} parameters are not coercive for L={L}, L0={L0}; "
                            "use strategy='custom'")
    return p


def params_for_domain(domain: Domain, k: float, strategy="paper_defaults", **kw) -> EnergyParams:
    return select_parameters(domain.dim, diameter(domain), star_shape_constant(domain), k,
                             strategy, **kw)


# ---------------------------------------------------------------------------
# quadrature evaluation


class Quadratures:
    """Interior and boundary rules for one domain."""

    def __init__(self, domain: Domain, order: int = 20, cells: int = 1):
        self.domain = domain
        self.interior = interior_quadrature(domain, order, cells)
        self.boundary = boundary_quadrature(domain, order, cells)


def _as_quads(domain, quads):
    if isinstance(quads, Quadratures):
        return quads
    if quads is None:
        return Quadratures(domain)
    return Quadratures(domain, int(quads))


def _forcing(f):
    if f is None:
        return Constant(0.0)
    if np.isscalar(f):
        return Constant(f)
    return f


def seminorms(u, k: float, domain: Domain, quads=None) -> dict:
    """Squared seminorms paired with the coercivity coefficients.

    ``mass`` and ``bmass`` already carry the k^2 factor.
    """
    q = _as_quads(domain, quads)
    iq, bq = q.interior, q.boundary
    x, xb = iq.points, bq.points
    return {
        "residual": float(iq.weights @ np.abs(u.helmholtz(x, k)) ** 2),
        "grad": float(iq.weights @ np.sum(np.abs(u.gradient(x)) ** 2, axis=1)),
        "mass": float(k**2 * (iq.weights @ np.abs(u.value(x)) ** 2)),
        "bgrad": float(bq.weights @ np.sum(np.abs(u.gradient(xb)) ** 2, axis=1)),
        "bmass": float(k**2 * (bq.weights @ np.abs(u.value(xb)) ** 2)),
        "bimp": float(bq.weights @ np.abs(u.impedance_residual(xb, bq.normals, k)) ** 2),
    }


def physical_energy(u, f, k: float, domain: Domain, quads=None) -> float:
    q = _as_quads(domain, quads)
    iq = q.interior
    x = iq.points
    v = u.value(x)
    dens = 0.5 * (np.sum(np.abs(u.gradient(x)) ** 2, axis=1) - k**2 * np.abs(v) ** 2)
    src = np.real(_forcing(f).value(x) * np.conj(v))
    return float(iq.weights @ (dens - src))


def regularised_energy(u, f, params: EnergyParams, domain: Domain, quads=None) -> float:
    """E_gamma with gamma = params.gamma1."""
    q = _as_quads(domain, quads)
    iq = q.interior
    res = u.helmholtz(iq.points, params.k) - _forcing(f).value(iq.points)
    return physical_energy(u, f, params.k, domain, q) + params.gamma1 * float(iq.weights @ np.abs(res) ** 2)


def weak_bc_energy(u, f, params: EnergyParams, domain: Domain, quads=None) -> float:
    q = _as_quads(domain, quads)
    bq = q.boundary
    g = u.impedance_residual(bq.points, bq.normals, params.k)
    return regularised_energy(u, f, params, domain, q) + params.gamma2 * float(bq.weights @ np.abs(g) ** 2)


def form_a(u, v, params: EnergyParams, domain: Domain, quads=None) -> complex:
    """Sesquilinear form of E_gamma: linear in u, antilinear in v."""
    q = _as_quads(domain, quads)
    iq = q.interior
    x, k = iq.points, params.k
    integrand = (np.einsum("nd,nd->n", u.gradient(x), np.conj(v.gradient(x)))
                 - k**2 * u.value(x) * np.conj(v.value(x))
                 + 2.0 * params.gamma1 * u.helmholtz(x, k) * np.conj(v.helmholtz(x, k)))
    return complex(iq.weights @ integrand)


def form_awbc(u, v, params: EnergyParams, domain: Domain, quads=None) -> complex:
    q = _as_quads(domain, quads)
    bq = q.boundary
    k = params.k
    gu = u.impedance_residual(bq.points, bq.normals, k)
    gv = v.impedance_residual(bq.points, bq.normals, k)
    return form_a(u, v, params, domain, q) + 2.0 * params.gamma2 * complex(bq.weights @ (gu * np.conj(gv)))


def v_norm_sq(u, k: float, domain: Domain, quads=None, rescaled: bool = False,
              L: float | None = None) -> float:
    """Squared V-norm; with ``rescaled`` the residual term is weighted by L^2
    and the four boundary terms by L."""
    s = seminorms(u, k, domain, quads)
    if rescaled:
        L = diameter(domain) if L is None else L
        w = {"grad": 1.0, "mass": 1.0, "residual": L**2, "bmass": L, "bgrad": L, "bimp": L}
    else:
        w = dict.fromkeys(TERMS, 1.0)
    return float(sum(w[t] * s[t] for t in TERMS))


def v_norm(u, k, domain, quads=None, rescaled=False, L=None) -> float:
    return math.sqrt(v_norm_sq(u, k, domain, quads, rescaled, L))


def coercivity_slack(u, params: EnergyParams, domain: Domain, quads=None) -> dict:
    """Exact decomposition of nu*F(u)|_{f=0} minus the weak-BC lower bound.

    Returns each Young/geometric slack (each non-negative by construction),
    the boundary coupling ``impedance_coupling`` = -2 Re int i k beta conj(u) g(u)
    coming from the low-order Morawetz identity, their sum ``total``, and
    the directly computed ``gap`` = nu*F - nu*bound for comparison.
    """
    q = _as_quads(domain, quads)
    iq, bq = q.interior, q.boundary
    p = params
    k, a, b, L, L0 = p.k, p.alpha, p.beta, p.L, p.L0
    x0 = np.asarray(domain.origin)

    x = iq.points
    v, gr, Lu = u.value(x), u.gradient(x), u.helmholtz(x, k)
    ydg = np.einsum("nd,nd->n", x - x0, gr)
    s = seminorms(u, k, domain, q)
    mixed = float(iq.weights @ (2.0 * np.real(ydg * np.conj(Lu))))
    m0 = float(iq.weights @ (2.0 * np.real(np.conj(-1j * k * b * v) * Lu)))

    xb, n = bq.points, bq.normals
    vb, gb = u.value(xb), u.gradient(xb)
    yn = np.einsum("nd,nd->n", xb - x0, n)
    y_conj_g = np.einsum("nd,nd->n", xb - x0, np.conj(gb))
    gimp = u.impedance_residual(xb, n, k)
    cross_g = float(bq.weights @ (2.0 * np.real(y_conj_g * gimp)))
    cross_u = float(bq.weights @ (2.0 * np.real(y_conj_g * 1j * k * vb)))
    gb2 = np.sum(np.abs(gb) ** 2, axis=1)

    slack = {
        "bulk_young": p.eps1 * s["grad"] + a**2 * L**2 / p.eps1 * s["residual"] - a * mixed,
        "star_grad": a * float(bq.weights @ (gb2 * yn)) - a * L0 * s["bgrad"],
        "star_mass": a * L * s["bmass"] - a * k**2 * float(bq.weights @ (np.abs(vb) ** 2 * yn)),
        "young_eps3": a * L**2 * p.eps3 * s["bgrad"] + a / p.eps3 * s["bimp"] - a * cross_g,
        "young_eps2": a * p.eps2 * s["bgrad"] + a * L**2 / p.eps2 * s["bmass"] - a * cross_u,
        "young_eps4": p.eps4 * s["mass"] + b**2 / p.eps4 * s["residual"] - m0,
    }
    coupling = -2.0 * float(np.real(bq.weights @ (1j * k * b * np.conj(vb) * gimp)))
    F = weak_bc_energy(u, None, p, domain, q)
    bound = coercivity_coefficients_weak(p).bound(s)
    out = dict(slack)
    out["impedance_coupling"] = coupling
    out["total"] = float(sum(slack.values()) + coupling)
    out["gap"] = p.nu * (F - bound)
    return out
