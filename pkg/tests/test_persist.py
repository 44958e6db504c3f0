"""File formats: round trips, validation errors, byte determinism."""

import numpy as np
import pytest

from pbdw.exceptions import IngestError
from pbdw.greedy import greedy_hierarchy, tensor_grid_training, weak_greedy
from pbdw.hashing import canonical_json
from pbdw.persist import (export_observations_csv, export_state_csv,
                          import_state_csv, ingest_observations, load_basis,
                          load_affine_map, load_partition, read_manifest,
                          save_affine_map, save_basis, save_partition,
                          write_comparison_csv, write_manifest,
                          write_selection_csv, write_trace_csv)


def test_state_csv_round_trip(tmp_path, model_1d2, rng):
    u = rng.standard_normal(model_1d2.space.dim)
    path = tmp_path / "state.csv"
    export_state_csv(path, u)
    again = import_state_csv(path, expected_dim=u.size)
    assert np.array_equal(again, u)


def test_state_csv_dimension_mismatch_names_sizes(tmp_path, rng):
    path = tmp_path / "state.csv"
    export_state_csv(path, rng.standard_normal(10))
    with pytest.raises(IngestError) as err:
        import_state_csv(path, expected_dim=12)
    assert "10" in str(err.value) and "12" in str(err.value)


def test_state_csv_bad_node_order_reports_the_line(tmp_path):
    path = tmp_path / "state.csv"
    path.write_text("node,value\n0,1.0\n2,2.0\n")
    with pytest.raises(IngestError) as err:
        import_state_csv(path)
    assert err.value.line == 3


def test_state_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "state.csv"
    path.write_text("idx,val\n0,1.0\n")
    with pytest.raises(IngestError) as err:
        import_state_csv(path)
    assert err.value.line == 1


def test_observation_csv_round_trip(tmp_path, model_1d2, system_1d2):
    states = [model_1d2.solve(np.array(y))
              for y in ([0.1, 0.2], [-0.5, 0.9])]
    obs = [system_1d2.observe(u) for u in states]
    path = tmp_path / "obs.csv"
    export_observations_csv(path, obs)
    again = ingest_observations(path, system_1d2)
    assert len(again) == 2
    for a, b in zip(obs, again):
        assert np.allclose(a.raw, b.raw, atol=1e-15)
        assert np.allclose(a.w_coords, b.w_coords, atol=1e-10)


def test_observation_csv_wrong_sensor_id_is_located(tmp_path, system_1d2):
    path = tmp_path / "obs.csv"
    path.write_text("sensor_id,value\n0,1.0\n2,2.0\n")
    with pytest.raises(IngestError) as err:
        ingest_observations(path, system_1d2)
    assert err.value.line == 3
    msg = str(err.value)
    assert "1" in msg and "2" in msg


def test_observation_csv_truncated_block_counts(tmp_path, system_1d2):
    path = tmp_path / "obs.csv"
    path.write_text("sensor_id,value\n0,1.0\n1,2.0\n2,0.5\n")
    with pytest.raises(IngestError) as err:
        ingest_observations(path, system_1d2)
    msg = str(err.value)
    assert "4" in msg and "3" in msg


def test_manifest_bytes_ignore_key_order(tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    write_manifest(a, {"x": 1, "y": [1.5, 2.0], "z": {"k": "v"}})
    write_manifest(b, {"z": {"k": "v"}, "y": [1.5, 2.0], "x": 1})
    assert a.read_bytes() == b.read_bytes()
    assert read_manifest(a)["y"] == [1.5, 2.0]


def test_canonical_json_is_stable():
    payload = {"b": 0.1 + 0.2, "a": [1, 2]}
    assert canonical_json(payload) == canonical_json(dict(payload))
    assert "0.30000000000000004" in canonical_json(payload)


def test_trace_and_selection_tables(tmp_path, model_1d2):
    space, trace = weak_greedy(model_1d2, tensor_grid_training(2, 5),
                               n_max=2)
    tpath = tmp_path / "decay.csv"
    write_trace_csv(tpath, trace)
    lines = tpath.read_text().strip().splitlines()
    assert lines[0] == "n,selected_point,surrogate_max,eps_certified"
    assert len(lines) == len(trace.eps_history) + 1

    spath = tmp_path / "selection.csv"
    write_selection_csv(spath, [
        {"n": 1, "beta": 0.5, "mu": 2.0, "eps": 0.1, "product": 0.2}])
    rows = spath.read_text().strip().splitlines()
    assert rows[0] == "n,beta,mu,eps,product"
    assert rows[1].startswith("1,")


def test_comparison_table_columns(tmp_path):
    path = tmp_path / "comparison.csv"
    write_comparison_csv(path, [
        {"method": "one-space(poor-mans)", "certificate": 0.5,
         "wc_lb": 0.3}])
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "method,certificate,wc_lb"
    assert lines[1].startswith("one-space(poor-mans),")


def test_basis_round_trip_with_manifest(tmp_path, model_1d2, greedy_1d2):
    space, _ = greedy_1d2
    path = tmp_path / "basis.npz"
    save_basis(path, space.basis, {"model": model_1d2.config_hash,
                                   "seed": 0})
    basis, manifest = load_basis(path)
    assert np.array_equal(basis, space.basis)
    assert manifest["model"] == model_1d2.config_hash


def test_affine_map_round_trip_predicts_identically(tmp_path, model_1d2,
                                                    system_1d2, greedy_1d2,
                                                    rng):
    from pbdw.affine import (AffineRecoveryEstimator, estimate_delta,
                             net_from_grid)
    space, trace = greedy_1d2
    net = net_from_grid(model_1d2, 5)
    estimate_delta(model_1d2, net, 9)
    est = AffineRecoveryEstimator().fit(system_1d2, net, space.basis,
                                        eta=float(trace.eps_history[3]))
    save_affine_map(tmp_path / "map", est)
    again = load_affine_map(tmp_path / "map", system_1d2)
    W = rng.standard_normal((4, system_1d2.m))
    assert np.allclose(again.predict(W), est.predict(W), atol=1e-14)
    assert again.certificate() == pytest.approx(est.certificate(),
                                                rel=1e-12)


def test_affine_map_load_checks_sensor_count(tmp_path, model_1d2, system_1d2,
                                             greedy_1d2):
    from pbdw.affine import AffineRecoveryEstimator, net_from_grid
    from pbdw.sensing import build_system, equispaced_average_sensors
    space, trace = greedy_1d2
    net = net_from_grid(model_1d2, 5)
    est = AffineRecoveryEstimator().fit(system_1d2, net, space.basis)
    save_affine_map(tmp_path / "map", est)
    other = build_system(model_1d2,
                         equispaced_average_sensors(5, width=0.1))
    with pytest.raises(IngestError) as err:
        load_affine_map(tmp_path / "map", other)
    msg = str(err.value)
    assert "4" in msg and "5" in msg


def test_partition_round_trip_recovers_identically(tmp_path, model_1d2,
                                                   system_1d2, rng):
    from pbdw.piecewise import (PartitionBudget, build_partition,
                                recover_pw)
    pm = build_partition(model_1d2, system_1d2, eps=5e-2,
                         budget=PartitionBudget(n_max=2, max_cells=32))
    save_partition(tmp_path / "partition", pm)
    again = load_partition(tmp_path / "partition", model_1d2, system_1d2)
    assert again.size == pm.size
    assert again.target_eps == pm.target_eps
    for _ in range(3):
        u = model_1d2.solve(rng.uniform(-1, 1, 2))
        obs = system_1d2.observe(u)
        a = recover_pw(pm, obs)
        b = recover_pw(again, obs)
        assert a.k_star == b.k_star
        assert np.allclose(a.u_star, b.u_star, atol=1e-12)
