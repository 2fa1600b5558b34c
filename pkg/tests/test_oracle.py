import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvp.energy import Quadratures, params_for_domain, weak_bc_energy
from hvp.exceptions import InvalidParams, ValidationError
from hvp.fields import Constant, GaussianBump, PlaneWave, finite_difference_errors
from hvp.geometry import Domain, boundary_quadrature, interior_quadrature
from hvp.oracle import (energy_minimiser_1d, exact_1d_constant_forcing, fd_reference_1d,
                        manufactured_generalised)

ENDS = np.array([[0.0], [1.0]])
NORMALS = np.array([[-1.0], [1.0]])


def closed_form(k, f, x):
    return f / k**2 * ((np.exp(1j * k * x) + np.exp(1j * k * (1 - x))) / 2 - 1)


@pytest.mark.parametrize("k", [0.5, np.pi, 7.3, 40.0])
def test_exact_solves_pde_and_bc(k):
    u = exact_1d_constant_forcing(k, 1.0 - 0.5j)
    x = np.linspace(0, 1, 301)[:, None]
    assert np.max(np.abs(u.helmholtz(x, k) - (1.0 - 0.5j))) < 1e-12 * max(1.0, k**2)
    assert np.max(np.abs(u.impedance_residual(ENDS, NORMALS, k))) < 1e-12
    np.testing.assert_allclose(u.value(x), closed_form(k, 1.0 - 0.5j, x[:, 0]), atol=1e-14)


def test_midpoint_value_at_pi():
    u = exact_1d_constant_forcing(np.pi, 1.0)
    v = u.value(np.array([[0.5]]))[0]
    assert abs(v - (-1 + 1j) / np.pi**2) < 1e-14
    assert abs(v.real + 0.101321) < 1e-6


def test_exact_rejects_nonpositive_k():
    with pytest.raises(InvalidParams):
        exact_1d_constant_forcing(0.0, 1.0)


def test_shifted_interval():
    d = Domain.interval(2.0, 3.5)
    k = 4.0
    u = exact_1d_constant_forcing(k, 2.0, d)
    ends = np.array([[2.0], [3.5]])
    assert np.max(np.abs(u.impedance_residual(ends, NORMALS, k))) < 1e-12
    x = np.linspace(2, 3.5, 50)[:, None]
    assert np.max(np.abs(u.helmholtz(x, k) - 2.0)) < 1e-11


def test_exact_derivatives_match_finite_differences():
    u = exact_1d_constant_forcing(3.0, 1.0)
    assert max(finite_difference_errors(u, np.linspace(0.1, 0.9, 9)[:, None], 1e-5)) < 1e-6


def test_exact_satisfies_weak_form():
    # int u' v' - k^2 u v - ik (u v)|_ends = int f v for smooth test fields v
    k = np.pi
    u = exact_1d_constant_forcing(k, 1.0)
    d = Domain.interval()
    iq, bq = interior_quadrature(d, 30, 4), boundary_quadrature(d, 30)
    rng = np.random.default_rng(0)
    for _ in range(20):
        v = GaussianBump([rng.uniform(0, 1)], rng.uniform(0.02, 0.5), rng.normal() + 1j * rng.normal())
        lhs = iq.weights @ (u.gradient(iq.points)[:, 0] * np.conj(v.gradient(iq.points)[:, 0])
                            - k**2 * u.value(iq.points) * np.conj(v.value(iq.points)))
        lhs -= 1j * k * (bq.weights @ (u.value(bq.points) * np.conj(v.value(bq.points))))
        rhs = iq.weights @ np.conj(v.value(iq.points))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(rhs))


def test_fd_reference_matches_exact():
    k = np.pi
    g = fd_reference_1d(k, 1.0, 10_000)
    assert g.max_abs_diff(exact_1d_constant_forcing(k, 1.0)) < 1e-6


def test_fd_reference_zero_forcing():
    g = fd_reference_1d(5.0, 0.0, 50)
    assert np.all(g.values == 0)


def test_fd_reference_second_order():
    k = 4.0
    u = exact_1d_constant_forcing(k, 1.0)
    errs = [fd_reference_1d(k, 1.0, n).max_abs_diff(u) for n in (101, 201, 401)]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 3.5) & (ratios < 4.5))


def test_fd_reference_field_forcing():
    k = 2.0
    g1 = fd_reference_1d(k, Constant(1.0, 1), 200)
    g2 = fd_reference_1d(k, 1.0, 200)
    np.testing.assert_allclose(g1.values, g2.values, atol=1e-14)


def test_fd_reference_rejects_tiny_grid():
    with pytest.raises(ValidationError):
        fd_reference_1d(1.0, 1.0, 2)


def test_manufactured_plane_wave():
    k = 6.0
    u = PlaneWave([0.6, 0.8], k)
    data = manufactured_generalised(u, k)
    x = np.random.default_rng(1).random((40, 2))
    assert np.max(np.abs(data.zeta.value(x))) < 1e-10
    n = np.tile([[1.0, 0.0]], (40, 1))
    expected = 1j * k * (0.6 - 1.0) * u.value(x)
    np.testing.assert_allclose(data.eta.value(x, n), expected, atol=1e-12)


def test_manufactured_from_exact_1d():
    k = 2.5
    data = manufactured_generalised(exact_1d_constant_forcing(k, 1.5), k)
    x = np.linspace(0, 1, 11)[:, None]
    np.testing.assert_allclose(data.zeta.value(x), 1.5, atol=1e-12)
    assert np.max(np.abs(data.eta.value(ENDS, NORMALS))) < 1e-12


def test_manufactured_gaussian_against_finite_differences():
    k = 3.0
    u = GaussianBump([0.3, 0.6], 0.2, 1 + 1j)
    data = manufactured_generalised(u, k)
    x = np.random.default_rng(2).random((10, 2))
    assert max(finite_difference_errors(u, x, 1e-5)) < 1e-6
    h = 1e-5
    lap = sum((u.gradient(x + h * e) - u.gradient(x - h * e))[:, j] / (2 * h)
              for j, e in enumerate(np.eye(2)))
    np.testing.assert_allclose(data.zeta.value(x), -lap - k**2 * u.value(x), rtol=1e-6, atol=1e-6)
    n = np.tile([[0.0, -1.0]], (10, 1))
    dn_fd = (u.value(x + h * n) - u.value(x - h * n)) / (2 * h)
    np.testing.assert_allclose(data.eta.value(x, n), dn_fd - 1j * k * u.value(x), rtol=1e-6, atol=1e-6)


# energy minimiser of the weak-BC energy (differs from the Helmholtz solution)

def _minimiser_setup(k):
    d = Domain.interval()
    p = params_for_domain(d, k)
    return d, p, energy_minimiser_1d(k, p.gamma1, 2 * p.gamma2, 1.0, d)


@pytest.mark.parametrize("k", [np.pi, 2 * np.pi, 5.0])
def test_minimiser_is_stationary(k):
    d, p, u = _minimiser_setup(k)
    q = Quadratures(d, 30, 8)
    F0 = weak_bc_energy(u, 1.0, p, d, q)
    rng = np.random.default_rng(3)
    for _ in range(5):
        v = GaussianBump([rng.uniform()], rng.uniform(0.05, 0.5), rng.normal() + 1j * rng.normal())
        for t in (1e-3, -1e-3, 1e-3j):
            assert weak_bc_energy(u + v * t, 1.0, p, d, q) >= F0 - 1e-12 * abs(F0)


def test_minimiser_differs_from_helmholtz_at_pi():
    k = np.pi
    _, _, u_min = _minimiser_setup(k)
    u = exact_1d_constant_forcing(k, 1.0)
    x = np.linspace(0, 1, 101)[:, None]
    gap = np.max(np.abs(u_min.value(x) - u.value(x)))
    assert 1e-6 < gap < 1e-3


def test_minimiser_coincides_with_helmholtz_when_trace_vanishes():
    # e^{ik} = 1 makes u and u' vanish at both ends
    k = 2 * np.pi
    _, _, u_min = _minimiser_setup(k)
    u = exact_1d_constant_forcing(k, 1.0)
    x = np.linspace(0, 1, 101)[:, None]
    assert np.max(np.abs(u_min.value(x) - u.value(x))) < 1e-12


def test_minimiser_needs_positive_gamma1():
    with pytest.raises(InvalidParams):
        energy_minimiser_1d(1.0, 0.0, 1.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(0.2, 30.0), re=st.floats(-3, 3), im=st.floats(-3, 3))
def test_exact_linear_in_forcing(k, re, im):
    f = complex(re, im)
    x = np.linspace(0, 1, 7)[:, None]
    u1 = exact_1d_constant_forcing(k, 1.0).value(x)
    uf = exact_1d_constant_forcing(k, f).value(x)
    np.testing.assert_allclose(uf, f * u1, atol=1e-12 * max(1, abs(f)) / min(1, k**2))
