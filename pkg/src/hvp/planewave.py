"""Plane-wave neural network: features, model, Monte-Carlo energy and its gradient.

Every quantity is carried as a jet (value, gradient, Laplacian) in x, so the
Helmholtz residual of the network is exact. The parameter gradient is a
hand-written reverse sweep through the same jets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import InvalidParams, SingularSystem
from .fields import ClosedFormField, Constant
from .geometry import Domain, sample_boundary, sample_interior

PARAM_NAMES = ("W", "G1", "c1", "G2", "c2", "M1", "b1", "M2", "b2")
MIXER = ("M1", "b1", "M2", "b2")
GAIN = ("G1", "c1", "G2", "c2")


# ---------------------------------------------------------------------------
# features


def fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z**2)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def unit_directions(P, dim):
    if dim == 1:
        return np.resize(np.array([[1.0], [-1.0]]), (P, 1))
    if dim == 2:
        th = 2.0 * np.pi * np.arange(P) / P
        d = np.stack([np.cos(th), np.sin(th)], axis=1)
        # exact zeros/ones at the axis directions
        return np.where(np.abs(d) < 1e-15, 0.0, d)
    if dim == 3:
        return fibonacci_sphere(P)
    raise InvalidParams(f"no direction set in {dim}D")


@dataclass(frozen=True)
class PlaneWaveFeatures:
    """cos/sin(kappa_r d_p . x); columns are the cos block then the sin block,
    each ordered ring-major (r, p)."""

    directions: np.ndarray   # (P, dim)
    kappas: np.ndarray       # (R,)
    k: float

    @property
    def P(self):
        return len(self.directions)

    @property
    def R(self):
        return len(self.kappas)

    @property
    def D(self):
        return 2 * self.P * self.R

    @property
    def dim(self):
        return self.directions.shape[1]

    def wavevectors(self):
        """(D/2, dim) array of kappa_r d_p in (r, p) order."""
        return (self.kappas[:, None, None] * self.directions[None]).reshape(-1, self.dim)

    def kappa_per_column(self):
        kap = np.repeat(self.kappas, self.P)
        return np.concatenate([kap, kap])

    def jets(self, x):
        """Value (n, D), gradient (n, dim, D), Laplacian (n, D)."""
        x = np.atleast_2d(x)
        K = self.wavevectors()
        ph = x @ K.T
        c, s = np.cos(ph), np.sin(ph)
        v = np.concatenate([c, s], axis=1)
        g = np.concatenate([-s[:, None, :] * K.T[None], c[:, None, :] * K.T[None]], axis=2)
        lap = -(self.kappa_per_column() ** 2) * v
        return v, g, lap

    def column_field(self, j) -> ClosedFormField:
        from .fields import CosineFeature
        half = self.D // 2
        kind = "cos" if j < half else "sin"
        jj = j % half
        r, p = divmod(jj, self.P)
        return CosineFeature(self.directions[p], self.kappas[r], kind)


def build_features(P: int, R: int, k: float, ring_spread: float = 0.1, dim: int = 2) -> PlaneWaveFeatures:
    if P < 1 or R < 1:
        raise InvalidParams("need P >= 1 and R >= 1")
    if not k > 0:
        raise InvalidParams("k must be positive")
    r = np.arange(R)
    kappas = k * (1.0 + ring_spread * r / R)
    kappas[0] = k
    return PlaneWaveFeatures(unit_directions(P, dim), kappas, float(k))


# ---------------------------------------------------------------------------
# activations: value and first three derivatives


def silu_derivs(a):
    s = 0.5 * (1.0 + np.tanh(0.5 * a))   # overflow-free logistic
    sp = s * (1.0 - s)
    q = 1.0 - 2.0 * s
    d0 = a * s
    d1 = s + a * sp
    d2 = sp * (2.0 + a * q)
    d3 = sp * (q * (3.0 + a * q) - 2.0 * a * sp)
    return d0, d1, d2, d3


def tanh_derivs(a):
    t = np.tanh(a)
    u = 1.0 - t**2
    return t, u, -2.0 * t * u, u * (6.0 * t**2 - 2.0)


# jets: value (n, m), gradient (n, dim, m), Laplacian (n, m)


def _act_forward(derivs, v, g, lap):
    s0, s1, s2, s3 = derivs(v)
    out = (s0, s1[:, None, :] * g, s2 * np.sum(g**2, axis=1) + s1 * lap)
    return out, (s1, s2, s3, g, lap)


def _act_backward(cache, Sv, Sg, Sl):
    s1, s2, s3, g, lap = cache
    g2 = np.sum(g**2, axis=1)
    Mv = Sv * s1 + s2 * np.sum(Sg * g, axis=1) + Sl * (s3 * g2 + s2 * lap)
    Mg = Sg * s1[:, None, :] + 2.0 * (Sl * s2)[:, None, :] * g
    Ml = Sl * s1
    return Mv, Mg, Ml


def _lin(v, g, lap, A, b=None):
    """Jets of y = A x + b applied along the last feature axis."""
    yv = v @ A.T + (0.0 if b is None else b)
    n, d, i = g.shape
    yg = (g.reshape(n * d, i) @ A.T).reshape(n, d, -1)
    return yv, yg, lap @ A.T


# ---------------------------------------------------------------------------
# model


@dataclass
class PlaneWaveModel:
    features: PlaneWaveFeatures
    params: dict
    alpha_g: float = 0.05

    @property
    def dim(self):
        return self.features.dim

    def copy(self):
        return PlaneWaveModel(self.features, {k: v.copy() for k, v in self.params.items()}, self.alpha_g)

    def flat(self, names=PARAM_NAMES):
        return np.concatenate([self.params[n].ravel() for n in names])

    def set_flat(self, vec, names=PARAM_NAMES):
        i = 0
        for n in names:
            sz = self.params[n].size
            self.params[n] = vec[i:i + sz].reshape(self.params[n].shape).copy()
            i += sz

    def forward(self, x, keep=False):
        """Output jets (n, 2), (n, dim, 2), (n, 2) for (u_R, u_I)."""
        p = self.params
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, dim = x.shape
        Pv, Pg, Pl = self.features.jets(x)
        # gain network: a1 = G1 x + c1 has constant gradient G1 and zero Laplacian
        a1v = x @ p["G1"].T + p["c1"]
        a1g = np.broadcast_to(p["G1"].T[None], (n, dim, len(p["c1"])))
        a1l = np.zeros_like(a1v)
        h1, c_h1 = _act_forward(silu_derivs, a1v, a1g, a1l)
        a2 = _lin(*h1, p["G2"], p["c2"])
        t, c_t = _act_forward(tanh_derivs, *a2)
        gv, gg, gl = 1.0 + self.alpha_g * t[0], self.alpha_g * t[1], self.alpha_g * t[2]
        zv = Pv * gv
        zg = Pg * gv[:, None, :] + Pv[:, None, :] * gg
        zl = Pl * gv + 2.0 * np.sum(Pg * gg, axis=1) + Pv * gl
        m1 = _lin(zv, zg, zl, p["M1"], p["b1"])
        h2, c_h2 = _act_forward(silu_derivs, *m1)
        mix = _lin(*h2, p["M2"], p["b2"])
        lin = _lin(Pv, Pg, Pl, p["W"].T)
        out = tuple(a + b for a, b in zip(lin, mix))
        if keep:
            cache = dict(x=x, P=(Pv, Pg, Pl), h1=h1, c_h1=c_h1, c_t=c_t, g=(gv, gg, gl),
                         z=(zv, zg, zl), h2=h2, c_h2=c_h2)
            return out, cache
        return out

    def backward(self, cache, Sv, Sg, Sl) -> dict:
        """Parameter gradient given seeds dJ/d(output jets)."""
        p = self.params
        Pv, Pg, Pl = cache["P"]
        grads = {}

        def lin_grads(inp, S):
            v, g, lap = inp
            Sv_, Sg_, Sl_ = S
            o, i = Sg_.shape[2], g.shape[2]
            return Sv_.T @ v + Sg_.reshape(-1, o).T @ g.reshape(-1, i) + Sl_.T @ lap

        def lin_back(A, S):
            Sv_, Sg_, Sl_ = S
            n, d, o = Sg_.shape
            return Sv_ @ A, (Sg_.reshape(n * d, o) @ A).reshape(n, d, -1), Sl_ @ A

        S = (Sv, Sg, Sl)
        grads["W"] = lin_grads((Pv, Pg, Pl), S).T
        grads["M2"] = lin_grads(cache["h2"], S)
        grads["b2"] = Sv.sum(axis=0)
        H = lin_back(p["M2"], S)
        M = _act_backward(cache["c_h2"], *H)
        grads["M1"] = lin_grads(cache["z"], M)
        grads["b1"] = M[0].sum(axis=0)
        Zv, Zg, Zl = lin_back(p["M1"], M)
        Gv = Zv * Pv + np.sum(Zg * Pg, axis=1) + Zl * Pl
        Gg = Zg * Pv[:, None, :] + 2.0 * Zl[:, None, :] * Pg
        Gl = Zl * Pv
        a = self.alpha_g
        A2 = _act_backward(cache["c_t"], a * Gv, a * Gg, a * Gl)
        grads["G2"] = lin_grads(cache["h1"], A2)
        grads["c2"] = A2[0].sum(axis=0)
        H1 = lin_back(p["G2"], A2)
        A1v, A1g, _ = _act_backward(cache["c_h1"], *H1)
        grads["G1"] = A1v.T @ cache["x"] + A1g.sum(axis=0).T
        grads["c1"] = A1v.sum(axis=0)
        return {n: grads[n] for n in PARAM_NAMES}

    def evaluate(self, x):
        """Complex value, gradient and Laplacian of u = u_R + i u_I."""
        v, g, lap = self.forward(x)
        return v[:, 0] + 1j * v[:, 1], g[:, :, 0] + 1j * g[:, :, 1], lap[:, 0] + 1j * lap[:, 1]

    def as_field(self) -> "ModelField":
        return ModelField(self)


class ModelField(ClosedFormField):
    """Closed-form view of a model (value, gradient, Laplacian; no Hessian)."""

    def __init__(self, model: PlaneWaveModel):
        self.model = model
        self.dim = model.dim
        self._cache = None

    def _eval(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self._cache is None or self._cache[0].shape != x.shape or not np.array_equal(self._cache[0], x):
            self._cache = (x.copy(), self.model.evaluate(x))
        return self._cache[1]

    def value(self, x):
        return self._eval(x)[0]

    def gradient(self, x):
        return self._eval(x)[1]

    def laplacian(self, x):
        return self._eval(x)[2]


def init_model(features: PlaneWaveFeatures, h_g: int = 32, h_m: int = 64, alpha_g: float = 0.05,
               rng=None, seed: int = 0, W=None) -> PlaneWaveModel:
    """Gain net ~ N(0, 1/fan_in); mixer output layer zero, so u = Phi W initially."""
    rng = np.random.default_rng(seed) if rng is None else rng
    D, dim = features.D, features.dim
    p = {
        "W": np.zeros((D, 2)) if W is None else np.array(W, dtype=float).reshape(D, 2),
        "G1": rng.normal(0.0, 1.0 / np.sqrt(dim), (h_g, dim)),
        "c1": np.zeros(h_g),
        "G2": rng.normal(0.0, 1.0 / np.sqrt(h_g), (D, h_g)),
        "c2": np.zeros(D),
        "M1": rng.normal(0.0, 1.0 / np.sqrt(D), (h_m, D)),
        "b1": np.zeros(h_m),
        "M2": np.zeros((2, h_m)),
        "b2": np.zeros(2),
    }
    return PlaneWaveModel(features, p, float(alpha_g))


# ---------------------------------------------------------------------------
# Monte-Carlo objective


@dataclass
class ObjectiveWeights:
    gamma1: float = 2.0
    gamma_bnd: float = 50.0
    physical: float = 1.0     # multiplies the bulk and source terms

    def to_dict(self):
        return {"gamma1": self.gamma1, "gamma_bnd": self.gamma_bnd, "physical": self.physical}


@dataclass
class Samples:
    interior: np.ndarray
    boundary: np.ndarray
    normals: np.ndarray
    volume: float
    area: float

    @classmethod
    def draw(cls, domain: Domain, n_interior: int, n_boundary: int, rng):
        x = sample_interior(domain, n_interior, rng)
        y, nrm = sample_boundary(domain, n_boundary, rng)
        return cls(x, y, nrm, domain.volume, domain.boundary_measure)


def _as_forcing(f, dim):
    if f is None:
        return Constant(0.0, dim)
    if isinstance(f, ClosedFormField):
        return f
    return Constant(complex(f), dim)


def objective_terms(model: PlaneWaveModel, f, k: float, weights: ObjectiveWeights,
                    samples: Samples, with_grad: bool = False):
    """The four terms of J-hat (measure-weighted sample means) and optionally dJ/dparams."""
    f = _as_forcing(f, model.dim)
    x = samples.interior
    N, Mb = len(x), len(samples.boundary)
    (uv, ug, ul), cache = model.forward(x, keep=True)
    fx = np.asarray(f.value(x), dtype=complex)
    fR, fI = fx.real, fx.imag
    rR = -ul[:, 0] - k**2 * uv[:, 0] - fR
    rI = -ul[:, 1] - k**2 * uv[:, 1] - fI
    vol, area = samples.volume, samples.area
    w = weights
    g2 = np.sum(ug**2, axis=(1, 2))
    u2 = np.sum(uv**2, axis=1)
    terms = {
        "residual": w.gamma1 * vol * float(np.mean(rR**2 + rI**2)),
        "bulk": w.physical * vol * float(np.mean(0.5 * (g2 - k**2 * u2))),
        "source": -w.physical * vol * float(np.mean(fR * uv[:, 0] + fI * uv[:, 1])),
    }
    (bv, bg, bl), bcache = model.forward(samples.boundary, keep=True)
    nrm = samples.normals
    dnR = np.einsum("nd,nd->n", bg[:, :, 0], nrm)
    dnI = np.einsum("nd,nd->n", bg[:, :, 1], nrm)
    bR = dnR + k * bv[:, 1]
    bI = dnI - k * bv[:, 0]
    terms["boundary"] = w.gamma_bnd * area * float(np.mean(bR**2 + bI**2))
    total = terms["residual"] + terms["boundary"] + terms["bulk"] + terms["source"]
    if not with_grad:
        return total, terms

    # seeds on interior jets
    cr = 2.0 * w.gamma1 * vol / N
    cp = w.physical * vol / N
    Sv = np.empty_like(uv)
    Sv[:, 0] = -k**2 * cr * rR - cp * k**2 * uv[:, 0] - cp * fR
    Sv[:, 1] = -k**2 * cr * rI - cp * k**2 * uv[:, 1] - cp * fI
    Sg = cp * ug
    Sl = np.stack([-cr * rR, -cr * rI], axis=1)
    grads = model.backward(cache, Sv, Sg, Sl)
    # seeds on boundary jets
    cb = 2.0 * w.gamma_bnd * area / Mb
    Bv = np.stack([-cb * k * bI, cb * k * bR], axis=1)
    Bg = np.stack([cb * bR[:, None] * nrm, cb * bI[:, None] * nrm], axis=2)
    Bl = np.zeros_like(bl)
    gb = model.backward(bcache, Bv, Bg, Bl)
    for n in grads:
        grads[n] = grads[n] + gb[n]
    return total, terms, grads


def mc_objective(model, f, k, weights, samples) -> float:
    return objective_terms(model, f, k, weights, samples)[0]


def mc_estimate(model, f, k, weights, samples):
    """J-hat together with its sample-variance standard error.

    Interior and boundary batches are independent, so their variances add.
    """
    f = _as_forcing(f, model.dim)
    w = weights
    uv, ug, ul = model.forward(samples.interior)
    fx = np.asarray(f.value(samples.interior), dtype=complex)
    u = uv[:, 0] + 1j * uv[:, 1]
    r = -(ul[:, 0] + 1j * ul[:, 1]) - k**2 * u - fx
    g2 = np.sum(ug**2, axis=(1, 2))
    q_int = samples.volume * (w.gamma1 * np.abs(r) ** 2
                              + w.physical * (0.5 * (g2 - k**2 * np.abs(u) ** 2)
                                              - np.real(fx * np.conj(u))))
    bv, bg, _ = model.forward(samples.boundary)
    dn = np.einsum("nd,ndc->nc", samples.normals, bg)
    b = (dn[:, 0] + 1j * dn[:, 1]) - 1j * k * (bv[:, 0] + 1j * bv[:, 1])
    q_bnd = samples.area * w.gamma_bnd * np.abs(b) ** 2
    J = float(np.mean(q_int) + np.mean(q_bnd))
    var = np.var(q_int, ddof=1) / len(q_int) + np.var(q_bnd, ddof=1) / len(q_bnd)
    return J, float(np.sqrt(var))


def gradient(model, f, k, weights, samples) -> dict:
    return objective_terms(model, f, k, weights, samples, with_grad=True)[2]


# ---------------------------------------------------------------------------
# least-squares initialisation of W


def _ls_blocks(features, f, k, x, y, normals, boundary_weight):
    """Rows of the real LS system in the unknown [w_R; w_I]."""
    D = features.D
    rows, rhs = [], []
    if len(x):
        Pv, _, _ = features.jets(x)
        Psi = (features.kappa_per_column() ** 2 - k**2) * Pv
        Z = np.zeros_like(Psi)
        fx = np.asarray(_as_forcing(f, features.dim).value(x), dtype=complex)
        rows += [np.hstack([Psi, Z]), np.hstack([Z, Psi])]
        rhs += [fx.real, fx.imag]
    if len(y) and boundary_weight > 0:
        Pv, Pg, _ = features.jets(y)
        Pn = np.einsum("ndD,nd->nD", Pg, normals)
        s = np.sqrt(boundary_weight)
        rows += [s * np.hstack([Pn, k * Pv]), s * np.hstack([-k * Pv, Pn])]
        rhs += [np.zeros(len(y)), np.zeros(len(y))]
    if not rows:
        return np.zeros((0, 2 * D)), np.zeros(0)
    return np.vstack(rows), np.concatenate(rhs)


@dataclass
class NormalEquations:
    """Streamed normal equations A^T A w = A^T b.

    ``form="sqrt"`` keeps them as a triangular factor R with R^T R = A^T A
    (updated by a QR of [R z; A_chunk b_chunk]), which avoids squaring the
    condition number. ``form="gram"`` accumulates A^T A directly.
    """

    size: int
    form: str = "sqrt"
    rows: int = 0

    def __post_init__(self):
        if self.form not in ("sqrt", "gram"):
            raise InvalidParams(f"unknown normal-equation form {self.form!r}")
        n = self.size
        self.G = np.zeros((n, n))
        self.h = np.zeros(n)
        self.R = np.zeros((0, n + 1))

    def add(self, A, b):
        self.G += A.T @ A
        self.h += A.T @ b
        self.rows += len(b)
        if self.form == "sqrt" and len(b):
            stacked = np.vstack([self.R, np.hstack([A, b[:, None]])])
            self.R = sla.qr(stacked, mode="r")[0][: self.size + 1]

    def default_ridge(self):
        return 1e-8 * max(np.trace(self.G), 1e-300) / self.size

    def solve(self, ridge):
        if ridge is None or (isinstance(ridge, str) and ridge == "auto"):
            ridge = self.default_ridge()
        if not ridge > 0:
            raise InvalidParams("ridge must be positive")
        n = self.size
        if self.form == "sqrt":
            R, z = self.R[:n, :n], self.R[:n, n]
            pad = n - R.shape[0]
            if pad > 0:
                R = np.vstack([R, np.zeros((pad, n))])
                z = np.concatenate([z, np.zeros(pad)])
            Rr = sla.qr(np.vstack([np.hstack([R, z[:, None]]),
                                   np.hstack([np.sqrt(ridge) * np.eye(n), np.zeros((n, 1))])]),
                        mode="r")[0][:n]
            diag = np.abs(np.diag(Rr[:, :n]))
            if not np.all(np.isfinite(Rr)) or diag.min() <= 1e-15 * diag.max():
                raise SingularSystem("ridge-regularised normal matrix is numerically singular")
            return sla.solve_triangular(Rr[:, :n], Rr[:, n]), ridge
        try:
            c = sla.cho_factor(self.G + ridge * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"ridge-regularised normal matrix not positive definite: {exc}") from exc
        if not np.all(np.isfinite(c[0])):
            raise SingularSystem("non-finite Cholesky factor")
        return sla.cho_solve(c, self.h), ridge


def ls_samples(domain, n_interior, n_boundary, seed):
    rng = np.random.default_rng(seed)
    x = sample_interior(domain, n_interior, rng)
    y, nrm = sample_boundary(domain, n_boundary, rng)
    return x, y, nrm


def ls_init(features, f, domain: Domain, k: float, boundary_weight: float = 50.0, ridge="auto",
            n_interior: int = 4096, n_boundary: int = 1024, seed: int = 0, chunk: int = 512,
            samples=None, return_info=False, form: str = "sqrt"):
    """W (D, 2) minimising the sampled interior-residual + impedance LS objective plus ridge.

    The normal equations are accumulated chunk by chunk; the full sample
    matrix is never formed.
    """
    x, y, nrm = samples if samples is not None else ls_samples(domain, n_interior, n_boundary, seed)
    D = features.D
    ne = NormalEquations(2 * D, form)
    for i in range(0, len(x), chunk):
        ne.add(*_ls_blocks(features, f, k, x[i:i + chunk], y[:0], nrm[:0], boundary_weight))
    for i in range(0, len(y), chunk):
        ne.add(*_ls_blocks(features, f, k, x[:0], y[i:i + chunk], nrm[i:i + chunk], boundary_weight))
    w, ridge = ne.solve(ridge)
    W = np.stack([w[:D], w[D:]], axis=1)
    if return_info:
        grad = 2.0 * ((ne.G + ridge * np.eye(2 * D)) @ w - ne.h)
        return W, {"ridge": ridge, "rows": ne.rows, "normal_matrix": ne.G, "normal_rhs": ne.h,
                   "objective_gradient": grad}
    return W


def ls_init_dense(features, f, domain, k, boundary_weight=50.0, ridge=1e-8, samples=None,
                  n_interior=4096, n_boundary=1024, seed=0):
    """Reference: one dense augmented least-squares solve on the same samples."""
    x, y, nrm = samples if samples is not None else ls_samples(domain, n_interior, n_boundary, seed)
    A, b = _ls_blocks(features, f, k, x, y, nrm, boundary_weight)
    n = A.shape[1]
    Aa = np.vstack([A, np.sqrt(ridge) * np.eye(n)])
    ba = np.concatenate([b, np.zeros(n)])
    w = np.linalg.lstsq(Aa, ba, rcond=None)[0]
    D = features.D
    return np.stack([w[:D], w[D:]], axis=1)
