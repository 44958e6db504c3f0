"""Residual quadratic form, metric projection, parameter estimation."""

import numpy as np
import pytest

from pbdw.inverse import (LsConfig, estimate_parameter, metric_project,
                          residual_norm_from_quadratic, residual_quadratic)
from pbdw.model import ModelConfig, build_model


@pytest.fixture(scope="module")
def model_1d1():
    return build_model(ModelConfig(d_y=1))


def test_quadratic_form_is_symmetric_psd(model_1d2, rng):
    u_bar = model_1d2.solve(rng.uniform(-1, 1, 2)) * 1.1
    q = residual_quadratic(model_1d2, u_bar)
    assert q.shape == (3, 3)
    assert np.allclose(q, q.T, atol=1e-12)
    assert np.linalg.eigvalsh(q).min() >= -1e-12


def test_quadratic_form_matches_direct_residual(model_1d2, rng):
    for _ in range(50):
        u_bar = model_1d2.solve(rng.uniform(-1, 1, 2)) \
            + 0.05 * rng.standard_normal(model_1d2.space.dim)
        q = residual_quadratic(model_1d2, u_bar)
        y = rng.uniform(-1, 1, 2)
        direct = model_1d2.space.dual_norm(
            model_1d2.residual(u_bar, y).dual_vector)
        assert np.isclose(residual_norm_from_quadratic(q, y), direct,
                          rtol=1e-10, atol=1e-13)


def test_projection_stays_in_the_box(model_1d2, rng):
    for _ in range(5):
        u_bar = model_1d2.solve(rng.uniform(-1, 1, 2)) \
            + 0.2 * rng.standard_normal(model_1d2.space.dim)
        proj = metric_project(model_1d2, u_bar)
        assert np.all(np.abs(proj.y_bar) <= 1.0 + 1e-12)
        assert proj.kkt_residual <= 1e-8
        assert proj.s_value >= 0.0
        assert proj.converged


def test_manifold_states_project_to_themselves(model_1d2):
    y0 = np.array([0.35, -0.6])
    proj = metric_project(model_1d2, model_1d2.solve(y0))
    assert proj.s_value <= 1e-8
    assert np.allclose(proj.y_bar, y0, atol=1e-6)


def test_target_beyond_the_box_lands_on_the_face(model_1d1):
    # a target extrapolated past the manifold edge: the pull-back must
    # stop at the box face with the matching active flag
    u_edge = model_1d1.solve(np.array([1.0]))
    u_out = u_edge + 1.5 * (u_edge - model_1d1.solve(np.array([0.6])))
    proj = metric_project(model_1d1, u_out)
    diag = proj.ls_diagnostics
    assert proj.y_bar[0] == pytest.approx(1.0, abs=1e-10)
    assert diag["active_upper"] == [0]
    assert diag["active_lower"] == []


def test_near_best_against_a_parameter_net(model_1d1, rng):
    r, R = model_1d1.bounds
    ys = np.linspace(-1, 1, 41)
    states = np.column_stack([model_1d1.solve(np.array([y])) for y in ys])
    g = model_1d1.space.gram
    # net slack: worst gap between adjacent net states
    steps = np.diff(states, axis=1)
    slack = np.sqrt(np.einsum("ij,ij->j", steps, g.dot(steps))).max()
    for _ in range(10):
        u_bar = model_1d1.solve(rng.uniform(-1, 1, 1)) \
            + 0.1 * rng.standard_normal(model_1d1.space.dim)
        proj = metric_project(model_1d1, u_bar)
        diff = states - u_bar[:, None]
        net_inf = np.sqrt(np.einsum("ij,ij->j", diff, g.dot(diff))).min()
        assert proj.s_value <= (R / r) * (net_inf + slack)


def test_estimate_parameter_reports_the_chain(model_1d2):
    y_true = np.array([0.25, 0.4])
    state = model_1d2.solve(y_true)
    est = estimate_parameter(model_1d2, state, wc_certificate=0.05,
                             y_true=y_true)
    r, R = model_1d2.bounds
    assert est.kappa == pytest.approx(R / r)
    assert est.chain_bound == pytest.approx((1.0 + R / r) * 0.05)
    assert est.realized_state_error <= 1e-6
    assert est.coefficient_error <= 1e-6
    assert est.projection.kkt_residual <= 1e-8


def test_estimate_without_certificate_has_no_chain_bound(model_1d2):
    state = model_1d2.solve(np.array([0.1, -0.1]))
    est = estimate_parameter(model_1d2, state)
    assert est.chain_bound is None


def test_ls_config_tightens_the_solve(model_1d2):
    u_bar = model_1d2.solve(np.array([0.8, -0.2]))
    loose = metric_project(model_1d2, u_bar,
                           ls_cfg=LsConfig(tol=1e-4, max_iter=2000))
    tight = metric_project(model_1d2, u_bar,
                           ls_cfg=LsConfig(tol=1e-10, max_iter=20000))
    assert tight.kkt_residual <= loose.kkt_residual + 1e-12
