import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvp.energy import Quadratures, params_for_domain, weak_bc_energy
from hvp.exceptions import InvalidParams, SingularSystem
from hvp.fields import Constant, GaussianBump, finite_difference_errors
from hvp.geometry import Domain
from hvp.planewave import (PARAM_NAMES, NormalEquations, ObjectiveWeights, Samples, build_features,
                           gradient, init_model, ls_init, ls_init_dense, ls_samples, mc_estimate,
                           mc_objective, objective_terms)

SQ = Domain.unit_square()


def tiny_model(seed=0, alpha_g=0.3, k=4.0):
    F = build_features(2, 2, k, 0.4)
    m = init_model(F, 4, 4, alpha_g, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for n in PARAM_NAMES:
        m.params[n] = m.params[n] + 0.3 * rng.normal(size=m.params[n].shape)
    return m


# features

def test_directions_and_rings():
    F = build_features(4, 1, 3.0)
    np.testing.assert_array_equal(F.directions, [[1, 0], [0, 1], [-1, 0], [0, -1]])
    assert F.D == 8 and F.kappas[0] == 3.0
    F = build_features(7, 3, 2.5, 0.2)
    np.testing.assert_allclose(np.linalg.norm(F.directions, axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(F.kappas, 2.5 * (1 + 0.2 * np.arange(3) / 3))


def test_build_features_rejects_bad_sizes():
    with pytest.raises(InvalidParams):
        build_features(0, 1, 1.0)
    with pytest.raises(InvalidParams):
        build_features(1, 0, 1.0)


def test_feature_identities_at_random_points():
    k = 6.0
    F = build_features(8, 3, k, 0.3)
    x = np.random.default_rng(0).random((1000, 2))
    v, g, lap = F.jets(x)
    half = F.D // 2
    K = F.wavevectors()
    # grad cos = -kappa d sin, Lap = -kappa^2 Phi, L Phi = (kappa^2 - k^2) Phi
    np.testing.assert_allclose(g[:, :, :half], -K.T[None] * v[:, None, half:], atol=1e-12)
    np.testing.assert_allclose(lap, -F.kappa_per_column() ** 2 * v, atol=1e-12)
    Lphi = -lap - k**2 * v
    np.testing.assert_allclose(Lphi, (F.kappa_per_column() ** 2 - k**2) * v, atol=1e-12)
    on_shell = np.r_[np.arange(F.P), half + np.arange(F.P)]
    assert np.max(np.abs(Lphi[:, on_shell])) < 1e-12


def test_off_shell_feature_against_finite_differences():
    F = build_features(4, 2, 5.0, 0.3)
    u = F.column_field(5)
    x = np.random.default_rng(1).random((20, 2))
    assert max(finite_difference_errors(u, x, 1e-5)) < 1e-6
    np.testing.assert_allclose(F.jets(x)[0][:, 5], u.value(x).real, atol=1e-14)


# model

def test_initial_gain_is_bounded():
    F = build_features(4, 2, 3.0)
    m = init_model(F, 8, 8, 0.05, seed=3)
    x = np.random.default_rng(2).random((500, 2))
    _, cache = m.forward(x, keep=True)
    gain = cache["g"][0]
    assert np.max(np.abs(gain - 1.0)) <= 0.05


def test_model_field_derivatives():
    m = tiny_model()
    x = np.random.default_rng(3).random((20, 2))
    assert max(finite_difference_errors(m.as_field(), x, 1e-5)) < 1e-6


def test_initial_model_is_linear_part():
    F = build_features(4, 2, 3.0)
    W = np.random.default_rng(4).normal(size=(F.D, 2))
    m = init_model(F, 8, 8, 0.05, seed=0, W=W)
    x = np.random.default_rng(5).random((30, 2))
    v = F.jets(x)[0]
    np.testing.assert_allclose(m.as_field().value(x), v @ W[:, 0] + 1j * (v @ W[:, 1]), atol=1e-13)


def test_flat_round_trip():
    m = tiny_model()
    vec = m.flat()
    m2 = m.copy()
    m2.set_flat(np.zeros_like(vec))
    assert not np.any(m2.flat())
    m2.set_flat(vec)
    np.testing.assert_array_equal(m2.flat(), vec)
    assert np.any(m.flat())


# objective

def test_zero_model_objective_is_source_norm():
    F = build_features(4, 2, 3.0)
    m = init_model(F, 4, 4, 0.05)
    f = GaussianBump([0.5, 0.5], 0.2, 2.0)
    S = Samples.draw(SQ, 300, 50, np.random.default_rng(0))
    J = mc_objective(m, f, 3.0, ObjectiveWeights(2.0, 50.0), S)
    assert J == pytest.approx(2.0 * np.mean(np.abs(f.value(S.interior)) ** 2), rel=1e-14)


def test_on_shell_wave_has_zero_residual():
    F = build_features(4, 1, 3.0)
    W = np.zeros((F.D, 2))
    W[1, 0] = 1.0
    m = init_model(F, 4, 4, 0.0, W=W)
    S = Samples.draw(SQ, 200, 50, np.random.default_rng(1))
    _, terms = objective_terms(m, None, 3.0, ObjectiveWeights(), S)
    assert terms["residual"] < 1e-25


def test_penalty_terms_non_negative_and_bulk_identity():
    m = tiny_model()
    S = Samples.draw(SQ, 300, 80, np.random.default_rng(2))
    total, t = objective_terms(m, None, 4.0, ObjectiveWeights(2.0, 50.0), S)
    assert t["residual"] >= 0 and t["boundary"] >= 0 and t["source"] == 0
    uv, ug, _ = m.forward(S.interior)
    bulk = 0.5 * np.mean(np.sum(ug**2, axis=(1, 2)) - 16.0 * np.sum(uv**2, axis=1))
    assert t["bulk"] == pytest.approx(bulk, rel=1e-12)
    assert total >= bulk - 1e-12


def test_objective_permutation_invariant():
    m = tiny_model()
    f = GaussianBump([0.3, 0.6], 0.1)
    S = Samples.draw(SQ, 256, 64, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    pi, pb = rng.permutation(256), rng.permutation(64)
    S2 = Samples(S.interior[pi], S.boundary[pb], S.normals[pb], S.volume, S.area)
    w = ObjectiveWeights()
    assert mc_objective(m, f, 4.0, w, S2) == pytest.approx(mc_objective(m, f, 4.0, w, S), rel=1e-12)


def test_mc_estimate_matches_objective():
    m = tiny_model()
    f = GaussianBump([0.3, 0.6], 0.1, 1 + 1j)
    S = Samples.draw(SQ, 500, 100, np.random.default_rng(5))
    w = ObjectiveWeights(1.5, 20.0, 0.7)
    J, se = mc_estimate(m, f, 4.0, w, S)
    assert J == pytest.approx(mc_objective(m, f, 4.0, w, S), rel=1e-12)
    assert se > 0


def test_mc_converges_to_quadrature_energy():
    m = tiny_model(seed=1)
    k = 4.0
    f = GaussianBump([0.5, 0.5], 0.05, 3.0)
    w = ObjectiveWeights(2.0, 50.0)
    p = params_for_domain(SQ, k).replace(gamma1=2.0, gamma2=50.0)
    ref = weak_bc_energy(m.as_field(), f, p, SQ, Quadratures(SQ, 20, 8))
    J, se = mc_estimate(m, f, k, w, Samples.draw(SQ, 50_000, 50_000, np.random.default_rng(6)))
    assert abs(J - ref) < 5 * se


def test_gradient_matches_finite_differences():
    m = tiny_model(seed=2)
    f = GaussianBump([0.4, 0.5], 0.1, 2.0 - 1.0j)
    S = Samples.draw(SQ, 64, 64, np.random.default_rng(7))
    w = ObjectiveWeights(2.0, 50.0)
    g = gradient(m, f, 4.0, w, S)
    x0 = m.flat()
    ga = np.concatenate([g[n].ravel() for n in PARAM_NAMES])
    fd = np.empty_like(x0)
    h = 1e-6
    for i in range(len(x0)):
        e = np.zeros_like(x0)
        e[i] = h
        m.set_flat(x0 + e)
        jp = mc_objective(m, f, 4.0, w, S)
        m.set_flat(x0 - e)
        fd[i] = (jp - mc_objective(m, f, 4.0, w, S)) / (2 * h)
    m.set_flat(x0)
    assert np.linalg.norm(ga - fd) / np.linalg.norm(fd) < 1e-5


def test_zero_model_zero_forcing_zero_gradient():
    F = build_features(2, 2, 3.0)
    m = init_model(F, 4, 4, 0.05)
    S = Samples.draw(SQ, 50, 20, np.random.default_rng(8))
    g = gradient(m, None, 3.0, ObjectiveWeights(), S)
    assert all(not np.any(v) for v in g.values())


def test_w_gradient_equals_ls_normal_residual():
    F = build_features(4, 2, 5.0, 0.3)
    k = 5.0
    f = GaussianBump([0.5, 0.5], 0.05, 4.0)
    x, y, nrm = ls_samples(SQ, 200, 60, 0)
    W = np.random.default_rng(9).normal(size=(F.D, 2))
    m = init_model(F, 4, 4, 0.0, W=W)
    S = Samples(x, y, nrm, 1.0, 4.0)
    # J-hat residual + boundary terms with gamma1 = N/vol, gamma_bnd = ws*M/area match the LS sums
    ws = 3.0
    w = ObjectiveWeights(len(x), ws * len(y) / 4.0, 0.0)
    gW = gradient(m, f, k, w, S)["W"]
    _, info = ls_init(F, f, SQ, k, ws, 1.0, samples=(x, y, nrm), return_info=True)
    wvec = np.concatenate([W[:, 0], W[:, 1]])
    g_ls = 2.0 * (info["normal_matrix"] @ wvec - info["normal_rhs"])
    np.testing.assert_allclose(np.concatenate([gW[:, 0], gW[:, 1]]), g_ls, rtol=1e-10, atol=1e-9)


# least-squares initialisation

def test_ls_zero_forcing_gives_zero():
    F = build_features(4, 2, 5.0, 0.3)
    W = ls_init(F, None, SQ, 5.0, 0.0, 1e-6, n_interior=200, n_boundary=0)
    assert not np.any(W)


def test_ls_recovers_representable_target():
    F = build_features(4, 2, 5.0, 0.3)
    j = 5          # cos, ring 1: off-shell
    kap = F.kappa_per_column()[j]
    f = F.column_field(j) * (kap**2 - 25.0)
    S = ls_samples(SQ, 500, 0, 1)
    W = ls_init(F, f, SQ, 5.0, 0.0, 1e-12, samples=S)
    Wd = ls_init_dense(F, f, SQ, 5.0, 0.0, 1e-12, samples=S)
    x = np.random.default_rng(2).random((100, 2))
    v, g, lap = F.jets(x)
    Lu = -(lap @ W[:, 0]) - 25.0 * (v @ W[:, 0])
    np.testing.assert_allclose(Lu, f.value(x).real, atol=1e-8)
    # directions come in opposite pairs, so the cos column has a twin; min-norm splits the weight
    assert W[5, 0] == pytest.approx(0.5, abs=1e-6) and W[7, 0] == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(W, Wd, atol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ls_stream_matches_dense(seed):
    F = build_features(4, 2, 5.0, 0.3)
    f = GaussianBump([0.5, 0.5], 0.01, 25.0)
    S = ls_samples(SQ, 400, 100, seed)
    _, info = ls_init(F, f, SQ, 5.0, 50.0, samples=S, return_info=True)
    ridge = 1e-6 * np.trace(info["normal_matrix"]) / (2 * F.D)
    Ws = ls_init(F, f, SQ, 5.0, 50.0, ridge, samples=S, chunk=64)
    Wd = ls_init_dense(F, f, SQ, 5.0, 50.0, ridge, samples=S)
    assert np.max(np.abs(Ws - Wd)) / np.max(np.abs(Wd)) < 1e-10


def test_ls_returned_w_minimises_quadratic():
    F = build_features(8, 2, 10.0, 0.3)
    f = GaussianBump([0.5, 0.5], 0.01, 100.0)
    W, info = ls_init(F, f, SQ, 10.0, 50.0, n_interior=1000, n_boundary=300, return_info=True)
    scale = np.linalg.norm(info["normal_rhs"])
    assert np.linalg.norm(info["objective_gradient"]) < 1e-8 * scale


def test_ls_chunking_does_not_matter():
    F = build_features(4, 2, 5.0, 0.3)
    f = GaussianBump([0.5, 0.5], 0.05, 25.0)
    S = ls_samples(SQ, 300, 100, 0)
    _, info = ls_init(F, f, SQ, 5.0, 50.0, samples=S, return_info=True)
    ridge = 1e-6 * np.trace(info["normal_matrix"]) / (2 * F.D)
    a = ls_init(F, f, SQ, 5.0, 50.0, ridge, samples=S, chunk=17)
    b = ls_init(F, f, SQ, 5.0, 50.0, ridge, samples=S, chunk=1000)
    assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(b))


def test_normal_equations_errors():
    with pytest.raises(InvalidParams):
        NormalEquations(3, form="cholesky")
    ne = NormalEquations(3)
    ne.add(np.eye(3), np.ones(3))
    with pytest.raises(InvalidParams):
        ne.solve(0.0)
    bad = NormalEquations(2)
    bad.add(np.array([[1e100, 0.0], [0.0, 0.0]]), np.zeros(2))
    with pytest.raises(SingularSystem):
        bad.solve(1e-300)


def test_gram_and_sqrt_forms_agree_when_well_conditioned():
    F = build_features(2, 1, 3.0)
    f = Constant(1.0, 2)
    a = ls_init(F, f, SQ, 3.0, 1.0, 1e-2, n_interior=200, n_boundary=50, form="gram")
    b = ls_init(F, f, SQ, 3.0, 1.0, 1e-2, n_interior=200, n_boundary=50, form="sqrt")
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(P=st.integers(1, 6), R=st.integers(1, 3), spread=st.floats(0.05, 0.5), k=st.floats(1.0, 15.0))
def test_feature_laplacian_property(P, R, spread, k):
    F = build_features(P, R, k, spread)
    x = np.random.default_rng(P * 7 + R).random((20, 2))
    v, g, lap = F.jets(x)
    np.testing.assert_allclose(lap, -F.kappa_per_column() ** 2 * v, atol=1e-12 * max(1, k**2))
    assert g.shape == (20, 2, F.D)
