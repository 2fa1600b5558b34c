"""Assembly and solution of the discrete weak-BC Galerkin system.

Matrix convention: M[j, i] = A_WBC(phi_i, phi_j), so that M c = b with
b_j = int f conj(phi_j + 2 gamma1 L phi_j) (+ boundary data load) gives the
discrete minimiser u_h = sum_i c_i phi_i.

The stored system uses the rescaled basis s_i phi_i with s_i = M_ii^(-1/2)
(unit diagonal). Derivative DOFs otherwise spread the diagonal over ~10
decades and the residual contract cannot be met in double precision.
Coefficients exchanged with callers always refer to the unscaled basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..energy import EnergyParams, Quadratures, v_norm_sq
from ..exceptions import SolveFailure, ValidationError
from ..fields import BoundaryField, ClosedFormField, Constant
from ..geometry import tensor_rule
from .space import FemSpace

COMPONENTS = ("K", "M", "R", "BG", "BM", "BI")
PENALTY_MODES = ("energy", "lambda_over_h")


def default_quad_order(space: FemSpace) -> int:
    # exact for products of element polynomials, plus two points
    return space.element.degree + 3


@dataclass
class _CellRule:
    t: np.ndarray        # reference points (n, dim)
    w: np.ndarray        # physical weights (n,)
    basis: dict
    normal: np.ndarray | None = None
    axis: int | None = None
    side: int | None = None

    @property
    def dn(self):
        return self.basis["grad"][:, :, self.axis] * self.normal[self.axis]


def _interior_rule(space: FemSpace, order: int) -> _CellRule:
    t, w = tensor_rule(np.zeros(space.dim), np.ones(space.dim), order)
    return _CellRule(t, w * np.prod(space.h), space.element.evaluate(t, space.h))


def _face_rules(space: FemSpace, order: int):
    d = space.dim
    for axis, side, normal in space.domain.faces():
        others = [a for a in range(d) if a != axis]
        ft, fw = tensor_rule(np.zeros(d - 1), np.ones(d - 1), order)
        t = np.empty((len(fw), d))
        t[:, others] = ft
        t[:, axis] = float(side)
        w = fw * np.prod(space.h[others])
        yield _CellRule(t, w, space.element.evaluate(t, space.h), normal, axis, side)


def _face_cells(space: FemSpace, axis: int, side: int) -> np.ndarray:
    ci = space.cell_index
    target = space.ncells[axis] - 1 if side else 0
    return np.nonzero(ci[:, axis] == target)[0]


def _helmholtz_basis(basis, k):
    lap = np.trace(basis["hess"], axis1=2, axis2=3)
    return -lap - k**2 * basis["val"]


def _scatter(space: FemSpace, cells, local, out):
    """Accumulate identical local matrices (nloc, nloc) [j, i] over cells into COO lists."""
    dofs = space.cell_dofs[cells]
    nl = dofs.shape[1]
    out[0].append(np.repeat(dofs, nl, axis=1).ravel())
    out[1].append(np.tile(dofs, (1, nl)).ravel())
    out[2].append(np.broadcast_to(local.ravel(), (len(cells), nl * nl)).ravel())


def _to_csr(space, coo, dtype):
    if not coo[0]:
        return sp.csr_matrix((space.ndof, space.ndof), dtype=dtype)
    rows, cols, data = (np.concatenate(a) for a in coo)
    m = sp.coo_matrix((data.astype(dtype), (rows, cols)), shape=(space.ndof, space.ndof))
    m = m.tocsr()
    m.sum_duplicates()
    return m


def assemble_components(space: FemSpace, k: float, quad_order: int | None = None) -> dict:
    """Global matrices of the individual terms of the form, all [j, i]-indexed.

    K: grad.grad, M: mass, R: L phi_i L phi_j, BG: boundary grad.grad,
    BM: boundary mass, BI: boundary g(phi_i) conj(g(phi_j)) (complex).
    """
    order = quad_order or default_quad_order(space)
    rule = _interior_rule(space, order)
    B, w = rule.basis, rule.w
    Lb = _helmholtz_basis(B, k)
    loc = {
        "K": np.einsum("jnd,ind,n->ji", B["grad"], B["grad"], w),
        "M": np.einsum("jn,in,n->ji", B["val"], B["val"], w),
        "R": np.einsum("jn,in,n->ji", Lb, Lb, w),
    }
    allc = np.arange(len(space.cell_index))
    coo = {name: ([], [], []) for name in COMPONENTS}
    for name in ("K", "M", "R"):
        _scatter(space, allc, loc[name], coo[name])
    for face in _face_rules(space, order):
        cells = _face_cells(space, face.axis, face.side)
        fb, fw = face.basis, face.w
        g = face.dn - 1j * k * fb["val"]
        floc = {
            "BG": np.einsum("jnd,ind,n->ji", fb["grad"], fb["grad"], fw),
            "BM": np.einsum("jn,in,n->ji", fb["val"], fb["val"], fw),
            "BI": np.einsum("jn,in,n->ji", np.conj(g), g, fw),
        }
        for name, m in floc.items():
            _scatter(space, cells, m, coo[name])
    return {name: _to_csr(space, coo[name], complex if name == "BI" else float)
            for name in COMPONENTS}


def boundary_weight(params: EnergyParams, space: FemSpace, penalty_mode="energy", lam=None):
    """Weight multiplying ||g||^2-type boundary terms of the form: 2 gamma2 or lambda/h."""
    if penalty_mode == "energy":
        return 2.0 * params.gamma2
    if penalty_mode == "lambda_over_h":
        if lam is None:
            raise ValidationError("lambda_over_h mode needs lam")
        return float(lam) / space.hmax
    raise ValidationError(f"penalty_mode must be one of {PENALTY_MODES}, got {penalty_mode!r}")


def combine(components: dict, params: EnergyParams, weight: float):
    k = params.k
    return (components["K"] - k**2 * components["M"] + 2.0 * params.gamma1 * components["R"]
            + weight * components["BI"]).tocsr()


@dataclass
class FemSystem:
    space: FemSpace
    matrix: sp.csr_matrix
    rhs: np.ndarray
    params: EnergyParams
    meta: dict = field(default_factory=dict)
    components: dict | None = None
    scale: np.ndarray | None = None

    @property
    def ndof(self):
        return self.space.ndof

    def _s(self):
        return np.ones(self.ndof) if self.scale is None else self.scale

    def unscaled_matrix(self):
        """Galerkin matrix in the unscaled (physical-derivative) basis."""
        d = sp.diags(1.0 / self._s())
        return (d @ self.matrix @ d).tocsr()

    def to_scaled(self, coeffs):
        return np.asarray(coeffs, dtype=complex) / self._s()

    def from_scaled(self, y):
        return np.asarray(y, dtype=complex) * self._s()

    def hermitian_defect(self) -> float:
        """max |M - M^H| / max |M|."""
        d = self.matrix - self.matrix.conj().T
        scale = abs(self.matrix).max()
        return float(abs(d).max() / scale) if d.nnz else 0.0

    def energy(self, coeffs) -> float:
        """Discrete F(u_h) including the data constant, so it equals the quadrature energy."""
        c = self.to_scaled(coeffs)
        quad = 0.5 * np.real(np.vdot(c, self.matrix @ c))
        return float(quad - np.real(np.vdot(c, self.rhs)) + self.meta["data_const"])


def _field_or_const(f, dim):
    if f is None:
        return Constant(0.0, dim)
    if isinstance(f, ClosedFormField):
        return f
    return Constant(complex(f), dim)


def assemble(space: FemSpace, params: EnergyParams, f=None, penalty_mode: str = "energy",
             lam: float | None = None, eta=None, quad_order: int | None = None,
             keep_components: bool = False, equilibrate: bool = True) -> FemSystem:
    """Assemble the Hermitian system and load vector.

    ``eta`` is an optional boundary datum: the impedance condition becomes
    d_n u - i k u = eta and the load gains weight * int eta conj(g(phi_j)).
    """
    if params.nu != space.dim:
        raise ValidationError(f"params are for nu={params.nu}, space is {space.dim}D")
    order = quad_order or default_quad_order(space)
    k = params.k
    weight = boundary_weight(params, space, penalty_mode, lam)
    comps = assemble_components(space, k, order)
    matrix = combine(comps, params, weight)

    f = _field_or_const(f, space.dim)
    rule = _interior_rule(space, order)
    Lb = _helmholtz_basis(rule.basis, k)
    test = rule.basis["val"] + 2.0 * params.gamma1 * Lb          # (nloc, nq), real
    x = space.cell_origin()[:, None, :] + rule.t[None] * space.h  # (ncell, nq, dim)
    fx = f.value(x.reshape(-1, space.dim)).reshape(x.shape[:2])
    rhs = _bincount(space, space.cell_dofs, np.einsum("cn,jn,n->cj", fx, test, rule.w))
    data_const = params.gamma1 * float(np.sum(np.abs(fx) ** 2 * rule.w))

    if eta is not None:
        if not isinstance(eta, BoundaryField):
            eta = _field_or_const(eta, space.dim)
        for face in _face_rules(space, order):
            cells = _face_cells(space, face.axis, face.side)
            gconj = face.dn + 1j * k * face.basis["val"]   # conj(g(phi_j)), phi real
            xb = space.cell_origin(space.cell_index[cells])[:, None, :] + face.t[None] * space.h
            xb = xb.reshape(-1, space.dim)
            if isinstance(eta, BoundaryField):
                ex = eta.value(xb, np.broadcast_to(face.normal, xb.shape))
            else:
                ex = eta.value(xb)
            ex = np.asarray(ex).reshape(len(cells), -1)
            rhs += weight * _bincount(space, space.cell_dofs[cells],
                                      np.einsum("cn,jn,n->cj", ex, gconj, face.w))
            data_const += 0.5 * weight * float(np.sum(np.abs(ex) ** 2 * face.w))

    scale = None
    if equilibrate:
        diag = np.abs(matrix.diagonal())
        scale = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
        d = sp.diags(scale)
        matrix = (d @ matrix @ d).tocsr()
        rhs = scale * rhs

    meta = {"h": space.h.tolist(), "k": k, "ndof": space.ndof, "element": space.element.name,
            "penalty_mode": penalty_mode, "boundary_weight": weight, "quad_order": order,
            "data_const": data_const}
    return FemSystem(space, matrix, rhs, params, meta, comps if keep_components else None, scale)


def _bincount(space, dofs, vals):
    idx = dofs.ravel()
    v = vals.ravel()
    return (np.bincount(idx, np.real(v), space.ndof)
            + 1j * np.bincount(idx, np.imag(v), space.ndof))


def solve(system: FemSystem, tol: float = 1e-10) -> np.ndarray:
    """Direct sparse LU solve with a relative residual contract.

    Returns coefficients in the unscaled basis.
    """
    b = system.rhs
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        system.meta["residual"] = 0.0
        return np.zeros(system.ndof, dtype=complex)
    try:
        lu = spla.splu(system.matrix.tocsc())
        x = lu.solve(b)
    except RuntimeError as exc:
        raise SolveFailure(f"factorisation failed: {exc}") from exc
    res = np.linalg.norm(system.matrix @ x - b) / bnorm
    if not np.isfinite(res) or res >= tol:
        # one step of iterative refinement before giving up
        x = x + lu.solve(b - system.matrix @ x)
        res = np.linalg.norm(system.matrix @ x - b) / bnorm
    system.meta["residual"] = float(res)
    if not np.isfinite(res) or res >= tol:
        raise SolveFailure(f"relative residual {res:.3e} above {tol:.0e}")
    return system.from_scaled(x)


def mesh_quadratures(space: FemSpace, order: int | None = None) -> Quadratures:
    """Composite rule aligned with the mesh cells."""
    return Quadratures(space.domain, order or default_quad_order(space), space.ncells)


def error_norms(coeffs, reference: ClosedFormField, space: FemSpace, params: EnergyParams | None = None,
                k: float | None = None, quad_order: int | None = None) -> dict:
    """Errors of u_h against a reference field.

    ``h1_error`` is the k-weighted norm (||grad e||^2 + k^2 ||e||^2)^(1/2).
    """
    if k is None:
        if params is None:
            raise ValidationError("pass params or k")
        k = params.k
    uh = coeffs if isinstance(coeffs, ClosedFormField) else space.field(coeffs)
    e = reference - uh
    q = mesh_quadratures(space, quad_order)
    iq = q.interior
    l2 = float(iq.weights @ np.abs(e.value(iq.points)) ** 2)
    g2 = float(iq.weights @ np.sum(np.abs(e.gradient(iq.points)) ** 2, axis=1))
    L = params.L if params is not None else None
    return {
        "v_norm_error": float(np.sqrt(v_norm_sq(e, k, space.domain, q))),
        "v_norm_error_rescaled": float(np.sqrt(v_norm_sq(e, k, space.domain, q, True, L))),
        "l2_error": float(np.sqrt(l2)),
        "h1_error": float(np.sqrt(g2 + k**2 * l2)),
    }


def form_against_basis(u: ClosedFormField, space: FemSpace, params: EnergyParams,
                       weight: float | None = None, quad_order: int | None = None) -> np.ndarray:
    """Vector a_j = A_WBC(u, phi_j) by mesh-aligned quadrature."""
    order = quad_order or default_quad_order(space)
    k = params.k
    weight = 2.0 * params.gamma2 if weight is None else weight
    rule = _interior_rule(space, order)
    B = rule.basis
    Lb = _helmholtz_basis(B, k)
    x = (space.cell_origin()[:, None, :] + rule.t[None] * space.h).reshape(-1, space.dim)
    shape = (len(space.cell_index), len(rule.w))
    uv = u.value(x).reshape(shape)
    ug = u.gradient(x).reshape(shape + (space.dim,))
    uL = u.helmholtz(x, k).reshape(shape)
    loc = (np.einsum("cnd,jnd,n->cj", ug, B["grad"], rule.w)
           - k**2 * np.einsum("cn,jn,n->cj", uv, B["val"], rule.w)
           + 2.0 * params.gamma1 * np.einsum("cn,jn,n->cj", uL, Lb, rule.w))
    out = _bincount(space, space.cell_dofs, loc)
    for face in _face_rules(space, order):
        cells = _face_cells(space, face.axis, face.side)
        xb = (space.cell_origin(space.cell_index[cells])[:, None, :] + face.t[None] * space.h)
        xb = xb.reshape(-1, space.dim)
        nb = np.broadcast_to(face.normal, xb.shape)
        gu = u.impedance_residual(xb, nb, k).reshape(len(cells), -1)
        gconj = face.dn + 1j * k * face.basis["val"]
        out += weight * _bincount(space, space.cell_dofs[cells],
                                  np.einsum("cn,jn,n->cj", gu, gconj, face.w))
    return out


def galerkin_defect(u: ClosedFormField, coeffs, system: FemSystem) -> float:
    """max_j |A(u - u_h, phi_j)| / max_j |A(u, phi_j)|."""
    a = form_against_basis(u, system.space, system.params, system.meta["boundary_weight"],
                           system.meta["quad_order"])
    a = system._s() * a
    d = a - system.matrix @ system.to_scaled(coeffs)
    return float(np.max(np.abs(d)) / np.max(np.abs(a)))
