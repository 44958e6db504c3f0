"""Strict experiment-config schema with key-path errors."""

import json

import pytest

from pbdw.config import ExperimentConfig, load_config, parse_config
from pbdw.exceptions import ConfigError
from pbdw.sensing import equispaced_average_sensors


def _doc(**overrides):
    doc = {
        "model": {"d_y": 2},
        "sensors": {"preset": "equispaced_average", "m": 4, "width": 0.125},
        "task": "greedy_decay",
    }
    doc.update(overrides)
    return doc


def test_minimal_config_parses_with_defaults():
    cfg = parse_config(_doc())
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.model.d_y == 2
    assert cfg.model.n_mesh == 200
    assert cfg.task == "greedy_decay"
    assert cfg.seeds == {"master": 0}
    assert cfg.tolerances == {}
    assert len(cfg.sensors) == 4


def test_unknown_keys_are_located():
    cases = [
        (_doc(bogus=1), "bogus"),
        (_doc(model={"d_y": 2, "bogus": 1}), "model.bogus"),
        (_doc(sensors=[{"kind": "local_average", "center": 0.5,
                        "width": 0.1, "bogus": 1}]), "sensors[0].bogus"),
        (_doc(tolerances={"bogus": 1}), "tolerances.bogus"),
        (_doc(seeds={"bogus": 1}), "seeds.bogus"),
    ]
    for doc, key_path in cases:
        with pytest.raises(ConfigError) as err:
            parse_config(doc)
        assert err.value.key_path == key_path


def test_model_errors_keep_their_paths():
    with pytest.raises(ConfigError) as err:
        parse_config(_doc(model={"d_y": 2, "rho": 2.0}))
    assert err.value.key_path == "model.rho"


def test_preset_matches_explicit_sensor_list():
    cfg = parse_config(_doc())
    explicit = equispaced_average_sensors(4, width=0.125)
    assert [(s.kind, s.center, s.width) for s in cfg.sensors] == \
        [(s.kind, s.center, s.width) for s in explicit]


def test_unknown_preset_is_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(_doc(sensors={"preset": "random", "m": 3,
                                   "width": 0.1}))
    assert err.value.key_path == "sensors.preset"


def test_seed_shorthand_expands():
    cfg = parse_config(_doc(seeds=7))
    assert cfg.seeds == {"master": 7}


def test_unknown_task_is_rejected():
    with pytest.raises(ConfigError) as err:
        parse_config(_doc(task="train_everything"))
    assert err.value.key_path == "task"


def test_missing_required_keys_are_named():
    doc = _doc()
    del doc["sensors"]
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.key_path == "sensors"


def test_hash_ignores_key_order_but_not_values():
    a = parse_config(_doc())
    b = parse_config(dict(reversed(list(_doc().items()))))
    c = parse_config(_doc(seeds=1))
    assert a.config_hash == b.config_hash
    assert a.config_hash != c.config_hash


def test_tolerance_knobs_accepted():
    cfg = parse_config(_doc(tolerances={"eps": 1e-2, "n_max": 3,
                                        "net_grid": 7}))
    assert cfg.tolerances["eps"] == 1e-2


def test_load_config_reports_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json]")
    with pytest.raises(ConfigError):
        load_config(path)


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_doc(output_dir="out")))
    cfg = load_config(path)
    assert cfg.output_dir == "out"
    assert cfg.config_hash == parse_config(_doc(output_dir="out")).config_hash
