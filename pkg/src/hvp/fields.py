"""Complex fields with analytic value, gradient and Laplacian.

Every field is evaluated on a batch of points ``x`` of shape (n, dim).
``value`` and ``laplacian`` return (n,), ``gradient`` returns (n, dim) and
``hessian`` (where available) returns (n, dim, dim).
"""

from __future__ import annotations

import numpy as np


def _points(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


class ClosedFormField:
    dim: int | None = None

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError(f"{type(self).__name__} has no analytic Hessian")

    def laplacian(self, x):
        return np.trace(self.hessian(x), axis1=1, axis2=2)

    def helmholtz(self, x, k):
        """L u = -Lap u - k^2 u."""
        return -self.laplacian(x) - k**2 * self.value(x)

    def normal_derivative(self, x, normals):
        return np.einsum("nd,nd->n", self.gradient(x), normals)

    def impedance_residual(self, x, normals, k):
        """d_n u - i k u."""
        return self.normal_derivative(x, normals) - 1j * k * self.value(x)

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other):
        return SumField(self, other)

    def __sub__(self, other):
        return SumField(self, ScaledField(other, -1.0))

    def __mul__(self, c):
        return ScaledField(self, c)

    __rmul__ = __mul__

    def __neg__(self):
        return ScaledField(self, -1.0)


class SumField(ClosedFormField):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def value(self, x):
        return self.a.value(x) + self.b.value(x)

    def gradient(self, x):
        return self.a.gradient(x) + self.b.gradient(x)

    def hessian(self, x):
        return self.a.hessian(x) + self.b.hessian(x)

    def laplacian(self, x):
        return self.a.laplacian(x) + self.b.laplacian(x)


class ScaledField(ClosedFormField):
    def __init__(self, field, c):
        self.field, self.c = field, complex(c)

    def value(self, x):
        return self.c * self.field.value(x)

    def gradient(self, x):
        return self.c * self.field.gradient(x)

    def hessian(self, x):
        return self.c * self.field.hessian(x)

    def laplacian(self, x):
        return self.c * self.field.laplacian(x)


class Constant(ClosedFormField):
    def __init__(self, c, dim=None):
        self.c = complex(c)
        self.dim = dim

    def value(self, x):
        x = _points(x)
        return np.full(len(x), self.c, dtype=complex)

    def gradient(self, x):
        x = _points(x)
        return np.zeros(x.shape, dtype=complex)

    def hessian(self, x):
        x = _points(x)
        return np.zeros(x.shape + x.shape[1:], dtype=complex)

    def laplacian(self, x):
        return np.zeros(len(_points(x)), dtype=complex)


class Polynomial(ClosedFormField):
    """Sum of monomials ``c * prod(x_j ** e_j)`` given as {exponents: coeff}."""

    def __init__(self, terms: dict):
        self.terms = {tuple(int(e) for e in k): complex(v) for k, v in terms.items()}
        dims = {len(k) for k in self.terms}
        if len(dims) != 1:
            raise ValueError("all exponent tuples must have the same length")
        self.dim = dims.pop()

    @property
    def degree(self):
        return max(sum(e) for e in self.terms)

    def _deriv(self, x, orders):
        x = _points(x)
        out = np.zeros(len(x), dtype=complex)
        for exps, c in self.terms.items():
            term = np.full(len(x), c)
            for j, (e, d) in enumerate(zip(exps, orders)):
                if d > e:
                    term = term * 0.0
                    break
                fac = 1.0
                for m in range(d):
                    fac *= e - m
                term = term * fac * x[:, j] ** (e - d)
            out += term
        return out

    def value(self, x):
        return self._deriv(x, (0,) * self.dim)

    def gradient(self, x):
        return np.stack([self._deriv(x, tuple(int(i == j) for i in range(self.dim)))
                         for j in range(self.dim)], axis=1)

    def hessian(self, x):
        x = _points(x)
        H = np.empty((len(x), self.dim, self.dim), dtype=complex)
        for a in range(self.dim):
            for b in range(self.dim):
                orders = [0] * self.dim
                orders[a] += 1
                orders[b] += 1
                H[:, a, b] = self._deriv(x, tuple(orders))
        return H


class PlaneWave(ClosedFormField):
    """amplitude * exp(i * wavenumber * d.x) with unit direction d."""

    def __init__(self, direction, wavenumber, amplitude=1.0):
        d = np.asarray(direction, dtype=float)
        self.direction = d / np.linalg.norm(d)
        self.wavenumber = float(wavenumber)
        self.amplitude = complex(amplitude)
        self.dim = len(d)

    def value(self, x):
        x = _points(x)
        return self.amplitude * np.exp(1j * self.wavenumber * x @ self.direction)

    def gradient(self, x):
        return (1j * self.wavenumber * self.value(x))[:, None] * self.direction

    def hessian(self, x):
        dd = np.outer(self.direction, self.direction)
        return -(self.wavenumber**2) * self.value(x)[:, None, None] * dd

    def laplacian(self, x):
        return -(self.wavenumber**2) * self.value(x)


class GaussianBump(ClosedFormField):
    """amplitude * exp(-|x - centre|^2 / width)."""

    def __init__(self, centre, width, amplitude=1.0):
        self.centre = np.atleast_1d(np.asarray(centre, dtype=float))
        self.width = float(width)
        self.amplitude = complex(amplitude)
        self.dim = len(self.centre)

    def value(self, x):
        r = _points(x) - self.centre
        return self.amplitude * np.exp(-np.sum(r**2, axis=1) / self.width)

    def gradient(self, x):
        r = _points(x) - self.centre
        return (-2.0 / self.width) * self.value(x)[:, None] * r

    def hessian(self, x):
        r = _points(x) - self.centre
        eye = np.eye(self.dim)
        outer = 4.0 / self.width**2 * r[:, :, None] * r[:, None, :] - 2.0 / self.width * eye
        return self.value(x)[:, None, None] * outer

    def laplacian(self, x):
        r2 = np.sum((_points(x) - self.centre) ** 2, axis=1)
        return self.value(x) * (4.0 * r2 / self.width**2 - 2.0 * self.dim / self.width)


class CosineFeature(ClosedFormField):
    """Real field cos(kappa d.x) (or sin), the off-shell plane-wave feature."""

    def __init__(self, direction, wavenumber, kind="cos", amplitude=1.0):
        d = np.asarray(direction, dtype=float)
        self.direction = d / np.linalg.norm(d)
        self.wavenumber = float(wavenumber)
        self.kind = kind
        self.amplitude = complex(amplitude)
        self.dim = len(d)

    def _phase(self, x):
        return self.wavenumber * _points(x) @ self.direction

    def value(self, x):
        t = self._phase(x)
        return self.amplitude * (np.cos(t) if self.kind == "cos" else np.sin(t))

    def gradient(self, x):
        t = self._phase(x)
        dv = -np.sin(t) if self.kind == "cos" else np.cos(t)
        return (self.amplitude * self.wavenumber * dv)[:, None] * self.direction

    def hessian(self, x):
        dd = np.outer(self.direction, self.direction)
        return -(self.wavenumber**2) * self.value(x)[:, None, None] * dd

    def laplacian(self, x):
        return -(self.wavenumber**2) * self.value(x)


class FunctionField(ClosedFormField):
    """Wrap user callables; missing derivatives raise."""

    def __init__(self, value, gradient=None, laplacian=None, hessian=None, dim=None):
        self._v, self._g, self._l, self._h = value, gradient, laplacian, hessian
        self.dim = dim

    def value(self, x):
        return np.asarray(self._v(_points(x)), dtype=complex)

    def gradient(self, x):
        if self._g is None:
            raise NotImplementedError("gradient not supplied")
        return np.asarray(self._g(_points(x)), dtype=complex)

    def hessian(self, x):
        if self._h is None:
            raise NotImplementedError("hessian not supplied")
        return np.asarray(self._h(_points(x)), dtype=complex)

    def laplacian(self, x):
        if self._l is not None:
            return np.asarray(self._l(_points(x)), dtype=complex)
        return super().laplacian(x)


def finite_difference_errors(field: ClosedFormField, x, step):
    """Relative mismatch of analytic gradient/Laplacian vs centred differences.

    Returns (grad_err, lap_err), each max|analytic - fd| / max(1, max|analytic|).
    """
    x = _points(x)
    dim = x.shape[1]
    g_fd = np.empty(x.shape, dtype=complex)
    lap_fd = np.zeros(len(x), dtype=complex)
    # Laplacian as the divergence of the analytic gradient: a second difference
    # of values loses ~eps/step^2 to roundoff.
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = step
        g_fd[:, j] = (field.value(x + e) - field.value(x - e)) / (2 * step)
        lap_fd += (field.gradient(x + e)[:, j] - field.gradient(x - e)[:, j]) / (2 * step)
    g, lap = field.gradient(x), field.laplacian(x)
    gerr = np.max(np.abs(g - g_fd)) / max(1.0, np.max(np.abs(g)))
    lerr = np.max(np.abs(lap - lap_fd)) / max(1.0, np.max(np.abs(lap)))
    return float(gerr), float(lerr)


class BoundaryField:
    """A boundary datum that may depend on the outward normal."""

    def value(self, x, normals):
        raise NotImplementedError


class ImpedanceTrace(BoundaryField):
    """eta = d_n u - i k u of a closed-form field."""

    def __init__(self, field: ClosedFormField, k: float):
        self.field, self.k = field, k

    def value(self, x, normals):
        return self.field.impedance_residual(_points(x), normals, self.k)


class Exponential1D(ClosedFormField):
    """u(x) = c0 + sum_j a_j exp(lam_j (x - s_j)) on the line."""

    dim = 1

    def __init__(self, c0, amps, rates, shifts=None):
        self.c0 = complex(c0)
        self.amps = np.asarray(amps, dtype=complex)
        self.rates = np.asarray(rates, dtype=complex)
        self.shifts = np.zeros(len(self.amps)) if shifts is None else np.asarray(shifts, dtype=float)

    def _modes(self, x):
        t = _points(x)[:, 0]
        return self.amps * np.exp(np.outer(t, np.ones_like(self.rates)) * self.rates
                                  - self.rates * self.shifts)

    def value(self, x):
        return self.c0 + self._modes(x).sum(axis=1)

    def gradient(self, x):
        return (self._modes(x) @ self.rates)[:, None]

    def hessian(self, x):
        return (self._modes(x) @ self.rates**2)[:, None, None]
