"""Linear recovery from one reduced space: stability constants and maps."""

import numpy as np
import pytest

from pbdw.exceptions import UnstableRecoveryError
from pbdw.model import ModelConfig, build_model
from pbdw.onespace import OneSpaceEstimator, ReducedSpace, beta_mu
from pbdw.sensing import build_system, equispaced_average_sensors


@pytest.fixture(scope="module")
def fitted(model_1d2, system_1d2, greedy_1d2):
    space, trace = greedy_1d2
    reduced = space.prefix(2, eps=float(trace.eps_history[2]))
    return OneSpaceEstimator().fit(reduced, system_1d2)


def test_reduced_basis_is_orthonormal(model_1d2, greedy_1d2):
    space, _ = greedy_1d2
    G = space.basis.T @ model_1d2.space.gram.dot(space.basis)
    assert np.allclose(G, np.eye(space.basis.shape[1]), atol=1e-10)


def test_stability_constants_live_in_range(fitted):
    assert 0.0 < fitted.beta_ <= 1.0 + 1e-12
    assert fitted.mu_ >= 1.0 - 1e-12
    assert np.isclose(fitted.mu_, 1.0 / fitted.beta_, rtol=1e-12)


def test_space_invisible_to_sensors_is_refused(model_1d2, system_1d2, rng):
    space = model_1d2.space
    V, _ = space.orthonormalize(rng.standard_normal((space.dim, 1)),
                                against=system_1d2.w_basis)
    hidden = ReducedSpace(basis=V, anchor=None, eps=0.1, provenance="test")
    beta, mu = beta_mu(hidden, system_1d2)
    assert beta <= 1e-10 and np.isinf(mu)
    # fitting records the degeneracy; recovering from data is refused
    est = OneSpaceEstimator().fit(hidden, system_1d2)
    assert np.isinf(est.mu_)
    with pytest.raises(UnstableRecoveryError):
        est.predict(np.zeros((1, system_1d2.m)))


def test_prediction_is_linear_in_the_data(fitted, rng):
    w1 = rng.standard_normal((1, fitted.system_.m))
    w2 = rng.standard_normal((1, fitted.system_.m))
    lhs = fitted.predict(2.5 * w1 + w2)
    rhs = 2.5 * fitted.predict(w1) + fitted.predict(w2)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_prediction_reproduces_the_data(fitted, model_1d2, system_1d2, rng):
    for _ in range(10):
        w = rng.standard_normal(system_1d2.m)
        u = fitted.predict(w[None, :])[0]
        assert np.linalg.norm(system_1d2.coords(u) - w) <= 1e-9


def test_map_norm_equals_mu(fitted, model_1d2, system_1d2, rng):
    W = rng.standard_normal((1000, system_1d2.m))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    U = fitted.predict(W)
    norms = np.sqrt(np.einsum(
        "ij,ij->i", U, (model_1d2.space.gram.dot(U.T)).T))
    assert norms.max() <= fitted.mu_ * (1 + 1e-6)
    assert norms.max() >= 0.8 * fitted.mu_


def test_error_bounded_by_mu_times_distance(fitted, model_1d2, rng):
    space = model_1d2.space
    basis = fitted.reduced_.basis
    for _ in range(20):
        u = model_1d2.solve(rng.uniform(-1, 1, 2))
        u_star = fitted.predict(fitted.system_.coords(u)[None, :])[0]
        dist = space.norm(u - basis @ (basis.T @ space.gram.dot(u)))
        assert space.norm(u - u_star) <= fitted.mu_ * dist * (1 + 1e-6)


def test_zero_eps_certificate_vanishes(fitted, system_1d2):
    collapsed = ReducedSpace(basis=fitted.reduced_.basis, anchor=None,
                             eps=0.0, provenance="test")
    est = OneSpaceEstimator().fit(collapsed, system_1d2)
    assert est.certify() == 0.0


def test_certificate_grows_with_noise_allowance(fitted):
    clean = fitted.certify()
    assert fitted.certify(noise_level=0.1) == pytest.approx(
        clean + fitted.mu_ * 0.1, rel=1e-12)


def test_extremal_direction_attains_the_constant(fitted, model_1d2):
    e, ratio = fitted.extremal_direction()
    space = model_1d2.space
    assert np.isclose(space.norm(e), 1.0, atol=1e-10)
    # orthogonal to the reduced space, as a worst cylinder member must be
    assert np.abs(fitted.reduced_.basis.T @ space.gram.dot(e)).max() <= 1e-8
    rec = fitted.predict(fitted.system_.coords(e)[None, :])[0]
    assert np.isclose(space.norm(e - rec), ratio, rtol=1e-8)
    assert abs(ratio - fitted.mu_) <= 0.01 * fitted.mu_


def test_manifold_bound_over_training_net(fitted, model_1d2, rng):
    space = model_1d2.space
    basis = fitted.reduced_.basis
    Y = rng.uniform(-1, 1, (1000, 2))
    U = np.column_stack([model_1d2.solve(y) for y in Y])
    W = fitted.system_.coords_many(U).T
    E = fitted.predict(W).T - U
    errs = np.sqrt(np.einsum("ij,ij->j", E, space.gram.dot(E)))
    P = U - basis @ (basis.T @ space.gram.dot(U))
    dists = np.sqrt(np.einsum("ij,ij->j", P, space.gram.dot(P)))
    assert errs.max() <= fitted.mu_ * dists.max() * (1 + 1e-6)


def test_beta_matches_dense_circle_sampling():
    # n=2 against m=3: the unit sphere of the reduced space is a circle,
    # so a fine angular sweep is an exhaustive lower-bound oracle
    model = build_model(ModelConfig(d_y=3, n_mesh=100))
    system = build_system(model, equispaced_average_sensors(3, width=0.2))
    space = model.space
    for seed in range(3):
        rng = np.random.default_rng(seed)
        snaps = np.column_stack(
            [model.solve(rng.uniform(-1, 1, 3)) for _ in range(2)])
        basis, _ = space.orthonormalize(snaps)
        reduced = ReducedSpace(basis=basis, anchor=None, eps=None,
                               provenance="test")
        beta, _ = beta_mu(reduced, system)
        theta = np.linspace(0.0, np.pi, 20_001)
        V = basis @ np.vstack([np.cos(theta), np.sin(theta)])
        PV = system.w_basis @ (system.w_basis.T @ space.gram.dot(V))
        sampled = np.sqrt(np.einsum("ij,ij->j", PV,
                                    space.gram.dot(PV))).min()
        assert np.isclose(beta, sampled, rtol=1e-3, atol=1e-6)


def test_affine_recovery_offsets_by_anchor(model_1d2, system_1d2,
                                           greedy_1d2):
    space, trace = greedy_1d2
    anchor = model_1d2.solve(np.zeros(2))
    shifted = ReducedSpace(basis=space.basis[:, :2], anchor=anchor,
                           eps=float(trace.eps_history[2]),
                           provenance="test")
    est = OneSpaceEstimator().fit(shifted, system_1d2)
    u = model_1d2.solve(np.array([0.2, -0.3]))
    u_star = est.predict(system_1d2.coords(u)[None, :])[0]
    # result stays data consistent despite the offset
    assert np.linalg.norm(system_1d2.coords(u_star)
                          - system_1d2.coords(u)) <= 1e-9
