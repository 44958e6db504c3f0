"""Measurement systems: projections, coordinates, noise, validation."""

import numpy as np
import pytest

from pbdw.exceptions import ConfigError, RankDeficiencyError
from pbdw.model import ModelConfig, build_model
from pbdw.sensing import (NoiseSpec, SensorSpec, build_system,
                          equispaced_average_sensors, equispaced_box_sensors)


def test_duplicate_sensors_are_rejected(model_1d2):
    spec = SensorSpec(kind="local_average", center=0.5, width=0.1)
    with pytest.raises(RankDeficiencyError):
        build_system(model_1d2, [spec, spec])


def test_projection_split_is_orthogonal_and_idempotent(model_1d2,
                                                       system_1d2, rng):
    space = model_1d2.space
    u = rng.standard_normal(space.dim)
    w_part, perp = system_1d2.project(u)
    assert space.norm(w_part + perp - u) <= 1e-12
    assert abs(space.inner(w_part, perp)) <= 1e-10
    again, residue = system_1d2.project(w_part)
    assert space.norm(again - w_part) <= 1e-10
    assert space.norm(residue) <= 1e-10
    for _ in range(5):
        a = rng.standard_normal(space.dim)
        b = rng.standard_normal(space.dim)
        pa, _ = system_1d2.project(a)
        pb, _ = system_1d2.project(b)
        assert np.isclose(space.inner(pa, b), space.inner(a, pb),
                          atol=1e-10)


def test_members_of_w_project_to_themselves(model_1d2, system_1d2, rng):
    u = system_1d2.w_basis @ rng.standard_normal(system_1d2.m)
    w_part, perp = system_1d2.project(u)
    assert model_1d2.space.norm(u - w_part) <= 1e-10
    assert model_1d2.space.norm(perp) <= 1e-10


def test_complement_elements_have_zero_data(model_1d2, system_1d2, rng):
    space = model_1d2.space
    V, _ = space.orthonormalize(rng.standard_normal((space.dim, 2)),
                                against=system_1d2.w_basis)
    v = V[:, 0]
    w_part, perp = system_1d2.project(v)
    assert space.norm(w_part) <= 1e-10
    assert space.norm(perp - v) <= 1e-10
    assert np.abs(system_1d2.coords(v)).max() <= 1e-10


def test_noiseless_raw_equals_functional_values(model_1d2, system_1d2):
    u = model_1d2.solve(np.array([0.4, -0.2]))
    obs = system_1d2.observe(u)
    assert np.allclose(obs.raw, system_1d2.apply_functionals(u), atol=1e-12)


def test_coords_and_raw_carry_the_same_information(system_1d2, rng):
    w = rng.standard_normal(system_1d2.m)
    again = system_1d2.coords_from_raw(system_1d2.raw_from_coords(w))
    assert np.allclose(again, w, atol=1e-10)


def test_representer_conditioning_is_recorded(model_1d2):
    system = build_system(model_1d2, equispaced_average_sensors(8, width=0.1))
    cond = system.metadata["gramian_cond"]
    assert np.isfinite(cond) and cond >= 1.0


def test_point_sensors_rejected_off_the_line():
    model = build_model(ModelConfig(dx=2, n_mesh=16, d_y=4))
    with pytest.raises(ConfigError) as err:
        build_system(model, [SensorSpec(kind="point_value", center=0.5)])
    assert err.value.key_path == "sensors.kind"


def test_point_sensors_read_nodal_interpolant(model_1d2):
    system = build_system(model_1d2, [
        SensorSpec(kind="point_value", center=0.25),
        SensorSpec(kind="point_value", center=0.75),
    ])
    u = model_1d2.solve(np.array([0.1, 0.6]))
    nodes = np.linspace(0.0, 1.0, model_1d2.config.n_mesh + 1)
    padded = np.concatenate([[0.0], u, [0.0]])
    assert np.allclose(system.apply_functionals(u),
                       np.interp([0.25, 0.75], nodes, padded), atol=1e-12)


def test_sensor_support_must_stay_inside_domain(model_1d2):
    with pytest.raises(ConfigError) as err:
        build_system(model_1d2, [
            SensorSpec(kind="local_average", center=0.99, width=0.1)])
    assert err.value.key_path == "sensors.center"


def test_box_sensors_build_in_2d():
    model = build_model(ModelConfig(dx=2, n_mesh=16, d_y=4))
    system = build_system(model, equispaced_box_sensors(2, width=0.25))
    assert system.m == 4


def test_bounded_noise_stays_inside_ball(system_1d2, model_1d2, rng):
    u = model_1d2.solve(np.array([0.3, 0.3]))
    clean = system_1d2.coords(u)
    spec = NoiseSpec(kind="bounded", level=0.05)
    for seed in range(10):
        obs = system_1d2.observe(u, noise=spec, rng=seed)
        assert np.linalg.norm(obs.w_coords - clean) <= 0.05 + 1e-12
        assert obs.applied_to == "coords"


def test_gaussian_noise_is_seed_reproducible(system_1d2, model_1d2):
    u = model_1d2.solve(np.array([-0.5, 0.1]))
    spec = NoiseSpec(kind="gaussian", level=0.01)
    a = system_1d2.observe(u, noise=spec, rng=7)
    b = system_1d2.observe(u, noise=spec, rng=7)
    assert np.array_equal(a.raw, b.raw)
    assert a.applied_to == "raw"


def test_gaussian_noise_can_target_coordinates(system_1d2, model_1d2):
    u = model_1d2.solve(np.array([-0.5, 0.1]))
    spec = NoiseSpec(kind="gaussian", level=0.01, apply_to="coords")
    obs = system_1d2.observe(u, noise=spec, rng=3)
    assert obs.applied_to == "coords"
    # raw stays consistent with the perturbed coordinates
    assert np.allclose(obs.raw, system_1d2.raw_from_coords(obs.w_coords),
                       atol=1e-12)


def test_noise_spec_validation():
    with pytest.raises(ConfigError) as err:
        NoiseSpec(kind="poisson")
    assert err.value.key_path == "noise.kind"
    with pytest.raises(ConfigError) as err:
        NoiseSpec(kind="bounded", level=0.1, apply_to="raw")
    assert err.value.key_path == "noise.apply_to"
    with pytest.raises(ConfigError) as err:
        NoiseSpec(kind="gaussian", level=-1.0)
    assert err.value.key_path == "noise.level"


def test_noisy_observation_requires_rng(system_1d2, model_1d2):
    u = model_1d2.solve(np.array([0.0, 0.0]))
    with pytest.raises(ValueError):
        system_1d2.observe(u, noise=NoiseSpec(kind="gaussian", level=0.1))
