"""Brute-force benchmarks: nets, slices, indistinguishability diameters."""

import time

import numpy as np
import pytest

from pbdw.exceptions import ConfigError
from pbdw.greedy import greedy_hierarchy, poor_mans_select
from pbdw.hashing import canonical_json
from pbdw.model import ModelConfig, build_model
from pbdw.onespace import OneSpaceEstimator
from pbdw.oracle import (default_slice_tol, delta_eps_bruteforce,
                         manifold_net, run_benchmark, slice_and_radius,
                         wc_error_bruteforce)
from pbdw.sensing import SensorSpec, build_system, equispaced_average_sensors


@pytest.fixture(scope="module")
def model_1d1():
    return build_model(ModelConfig(d_y=1))


@pytest.fixture(scope="module")
def net_1d2_9(model_1d2):
    return manifold_net(model_1d2, grid_per_dim=9)


@pytest.fixture(scope="module")
def net_1d2_17(model_1d2):
    return manifold_net(model_1d2, grid_per_dim=17)


def test_net_size_matches_grid(model_1d1):
    net = manifold_net(model_1d1, grid_per_dim=11)
    assert net.size == 11
    assert net.params.shape == (11, 1)


def test_net_runtime_at_three_parameters():
    model = build_model(ModelConfig(d_y=3))
    t0 = time.time()
    net = manifold_net(model, grid_per_dim=21)
    elapsed = time.time() - t0
    print("9261-state net built in %.2fs" % elapsed)
    assert net.size == 9261


def test_net_cache_round_trip(model_1d1, tmp_path):
    fresh = manifold_net(model_1d1, grid_per_dim=7, cache_dir=str(tmp_path))
    again = manifold_net(model_1d1, grid_per_dim=7, cache_dir=str(tmp_path))
    assert again.provenance.get("cache") == "hit"
    assert np.array_equal(fresh.states, again.states)
    assert np.array_equal(fresh.params, again.params)


def test_net_state_budget_guard(model_1d1):
    with pytest.raises(ConfigError):
        manifold_net(model_1d1, grid_per_dim=2_000_000)


def test_default_grid_respects_the_state_cap(model_1d2):
    net = manifold_net(model_1d2)
    assert net.size <= 3000
    assert net.provenance["grid_per_dim"] == 53


def test_slice_at_a_net_point_is_nonempty(net_1d2_9, system_1d2):
    w = system_1d2.coords(net_1d2_9.states[:, 40])
    members, radius = slice_and_radius(
        net_1d2_9, system_1d2, w, default_slice_tol(net_1d2_9, system_1d2))
    assert 40 in members
    assert radius is not None


def test_enough_sensors_make_slices_singletons(model_1d1):
    # m = d_y + 2 pins the observed part way past the manifold dimension
    system = build_system(model_1d1,
                          equispaced_average_sensors(3, width=0.15))
    net = manifold_net(model_1d1, grid_per_dim=101)
    w = system.coords(net.states[:, 50])
    members, radius = slice_and_radius(net, system, w,
                                       default_slice_tol(net, system))
    assert list(members) == [50]
    assert radius == 0.0


def test_empty_slice_reports_no_radius(net_1d2_9, system_1d2):
    w = 100.0 + np.zeros(system_1d2.m)
    members, radius = slice_and_radius(
        net_1d2_9, system_1d2, w, default_slice_tol(net_1d2_9, system_1d2))
    assert len(members) == 0
    assert radius is None


def test_slice_radius_bounds_any_map_below(net_1d2_9, model_1d2, system_1d2,
                                           greedy_1d2):
    # half the slice diameter never exceeds the worst member error of any
    # single-valued map evaluated at the shared observation
    space, trace = greedy_1d2
    est = OneSpaceEstimator().fit(
        space.prefix(2, eps=float(trace.eps_history[2])), system_1d2)
    tol = default_slice_tol(net_1d2_9, system_1d2)
    checked = 0
    for idx in range(0, net_1d2_9.size, 7):
        w = system_1d2.coords(net_1d2_9.states[:, idx])
        members, radius = slice_and_radius(net_1d2_9, system_1d2, w, tol)
        if len(members) < 2:
            continue
        guess = est.predict(w[None, :])[0]
        errs = [model_1d2.space.norm(net_1d2_9.states[:, j] - guess)
                for j in members]
        assert radius <= max(errs) + 1e-12
        checked += 1
    # the default tolerance keeps observation slices of this coarse net
    # essentially singletons; the inequality itself is what matters
    if checked == 0:
        loose = 2000 * tol
        for idx in (0, 17, 44):
            w = system_1d2.coords(net_1d2_9.states[:, idx])
            members, radius = slice_and_radius(net_1d2_9, system_1d2, w,
                                               loose)
            guess = est.predict(w[None, :])[0]
            errs = [model_1d2.space.norm(net_1d2_9.states[:, j] - guess)
                    for j in members]
            assert radius <= max(errs) + 1e-12


def test_delta_vanishes_under_full_observation():
    model = build_model(ModelConfig(d_y=1, n_mesh=8))
    system = build_system(model, [
        SensorSpec(kind="point_value", center=k / 8.0)
        for k in range(1, 8)])
    net = manifold_net(model, grid_per_dim=11)
    assert delta_eps_bruteforce(net, system, 0.0) == 0.0
    assert delta_eps_bruteforce(net, system, 0.05) == 0.0


def test_delta_monotone_in_the_blur(net_1d2_9, system_1d2):
    values = [delta_eps_bruteforce(net_1d2_9, system_1d2, e)
              for e in (0.0, 1e-3, 1e-2, 1e-1)]
    assert all(b >= a - 1e-15 for a, b in zip(values, values[1:]))
    assert values[-1] >= 2e-1 - 1e-12  # the i = j pairs alone give 2 eps


def test_delta_regression_on_the_default_net(model_1d2, system_1d2):
    # pinned once from this configuration: no distinct net states share
    # an observation at the default matching slack, so the clean
    # diameter is exactly zero
    net = manifold_net(model_1d2)
    assert delta_eps_bruteforce(net, system_1d2, 0.0) == 0.0


def test_oracle_outputs_grow_under_net_refinement(model_1d2, system_1d2,
                                                  greedy_1d2, net_1d2_9,
                                                  net_1d2_17):
    space, trace = greedy_1d2
    est = OneSpaceEstimator().fit(
        space.prefix(2, eps=float(trace.eps_history[2])), system_1d2)
    tol = default_slice_tol(net_1d2_17, system_1d2)
    for eps in (0.0, 1e-2):
        coarse = delta_eps_bruteforce(net_1d2_9, system_1d2, eps,
                                      eps_slice=tol)
        fine = delta_eps_bruteforce(net_1d2_17, system_1d2, eps,
                                    eps_slice=tol)
        assert fine >= coarse - 1e-15
    wc_coarse, _ = wc_error_bruteforce(net_1d2_9, system_1d2, est)
    wc_fine, _ = wc_error_bruteforce(net_1d2_17, system_1d2, est)
    assert wc_fine >= wc_coarse - 1e-15


def test_cheating_map_pays_the_net_resolution(model_1d2, system_1d2,
                                              net_1d2_9, net_1d2_17):
    # nearest-net-state lookup is exact on its own net but must err on a
    # finer one, by no more than a small multiple of the fill distance
    coords = system_1d2.coords_many(net_1d2_9.states)
    sq = np.einsum("ij,ij->j", coords, coords)

    def cheat(W):
        W = np.atleast_2d(W)
        idx = np.argmin(sq[None, :] - 2.0 * (W @ coords), axis=1)
        return net_1d2_9.states[:, idx].T

    wc_own, _ = wc_error_bruteforce(net_1d2_9, system_1d2, cheat)
    assert wc_own <= 1e-10
    wc_fine, _ = wc_error_bruteforce(net_1d2_17, system_1d2, cheat)
    from pbdw.affine import estimate_delta
    fill = estimate_delta(model_1d2, net_1d2_9, 17)
    assert 0.0 < wc_fine <= 2.0 * fill


def test_certificates_dominate_oracle_lower_bounds(model_1d2, system_1d2,
                                                   greedy_1d2, net_1d2_17):
    space, trace = greedy_1d2
    hier = greedy_hierarchy(model_1d2, space, trace)
    pick = poor_mans_select(model_1d2, system_1d2, hier)
    wc, _ = wc_error_bruteforce(net_1d2_17, system_1d2, pick.map)
    cert = pick.rows[pick.n_star - 1]["product"]
    assert wc <= cert * (1 + 1e-6)


def test_benchmark_report_is_serializable(model_1d2, system_1d2, greedy_1d2):
    space, trace = greedy_1d2
    est = OneSpaceEstimator().fit(
        space.prefix(2, eps=float(trace.eps_history[2])), system_1d2)
    report = run_benchmark(model_1d2, system_1d2,
                           estimators={"one-space": est},
                           eps_list=(0.0, 1e-2), grid_per_dim=9,
                           n_slice_probes=4, seed=1)
    payload = report.as_dict()
    text = canonical_json(payload)
    assert canonical_json(report.as_dict()) == text
    assert payload["net_size"] == 81
    assert len(payload["rad_slices"]) == 4
    assert set(payload["delta_eps"]) == {"0.0", "0.01"} \
        or len(payload["delta_eps"]) == 2
    assert "one-space" in payload["wc_errors"]
