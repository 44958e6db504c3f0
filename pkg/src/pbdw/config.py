"""Experiment configuration: strict JSON schema with key-path errors.

Unknown keys are rejected rather than ignored so a typo cannot silently
change an experiment; every accepted field enters the manifest hash.
"""

import json
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .hashing import sha256_hex
from .model import ModelConfig
from .sensing import SensorSpec

TASKS = ("greedy_decay", "fit_affine", "build_pw", "estimate_state",
         "estimate_param", "bench_oracle", "compare_all")

_MODEL_KEYS = {"dx", "n_mesh", "d_y", "a0", "coeff_profile", "rho", "f",
               "solver_tol", "seed"}
_SENSOR_KEYS = {"kind", "center", "width"}
_PRESET_KEYS = {"preset", "m", "width"}
_TOP_KEYS = {"model", "sensors", "task", "seeds", "tolerances",
             "output_dir", "observations", "state_file"}
_SEED_KEYS = {"master"}
# union of the knobs any task reads; per-task defaults live in tasks.py
_TOLERANCE_KEYS = {
    "eps", "n_max", "max_cells", "tensor_k", "training_points",
    "split_rule", "train_per_dim", "train_mode", "n_train", "tol",
    "net_grid", "probe_grid", "tol_opt", "eta", "ls_tol", "ls_max_iter",
    "grid_per_dim", "eps_list", "slice_tol", "n_slice_probes",
    "n_samples",
}


@dataclass
class ExperimentConfig:
    """Validated experiment description; hash covers every field."""

    model: ModelConfig
    sensors: list
    task: str
    seeds: dict = field(default_factory=lambda: {"master": 0})
    tolerances: dict = field(default_factory=dict)
    output_dir: str = None
    observations: str = None
    state_file: str = None

    def resolved(self):
        """Plain dict covering every field, for hashing and manifests."""
        return {
            "model": self.model.to_dict(),
            "sensors": [{"kind": s.kind,
                         "center": s.center,
                         "width": s.width} for s in self.sensors],
            "task": self.task,
            "seeds": dict(self.seeds),
            "tolerances": dict(self.tolerances),
            "output_dir": self.output_dir,
            "observations": self.observations,
            "state_file": self.state_file,
        }

    @property
    def config_hash(self):
        return sha256_hex(self.resolved())


def _reject_unknown(doc, allowed, where):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}'",
                              key_path=f"{where}.{key}" if where else key)


def _parse_sensors(raw):
    if isinstance(raw, dict):
        _reject_unknown(raw, _PRESET_KEYS, "sensors")
        preset = raw.get("preset")
        if preset not in ("equispaced_average", "equispaced_box"):
            raise ConfigError(f"unknown preset '{preset}'",
                              key_path="sensors.preset")
        if "m" not in raw or "width" not in raw:
            raise ConfigError("preset needs 'm' and 'width'",
                              key_path="sensors")
        from .sensing import equispaced_average_sensors, \
            equispaced_box_sensors
        maker = equispaced_average_sensors \
            if preset == "equispaced_average" else equispaced_box_sensors
        return maker(int(raw["m"]), float(raw["width"]))
    if not isinstance(raw, list) or not raw:
        raise ConfigError("expected a nonempty list of sensor specs",
                          key_path="sensors")
    specs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ConfigError("sensor spec must be an object",
                              key_path=f"sensors[{i}]")
        _reject_unknown(item, _SENSOR_KEYS, f"sensors[{i}]")
        if "kind" not in item or "center" not in item:
            raise ConfigError("sensor spec needs 'kind' and 'center'",
                              key_path=f"sensors[{i}]")
        center = item["center"]
        center = tuple(center) if isinstance(center, list) else center
        width = item.get("width")
        width = tuple(width) if isinstance(width, list) else width
        specs.append(SensorSpec(kind=item["kind"], center=center,
                                width=width))
    return specs


def parse_config(doc):
    """Validate a config document into an ExperimentConfig."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(doc, _TOP_KEYS, "")
    for required in ("model", "sensors", "task"):
        if required not in doc:
            raise ConfigError("required key missing", key_path=required)

    model_doc = doc["model"]
    if not isinstance(model_doc, dict):
        raise ConfigError("expected an object", key_path="model")
    _reject_unknown(model_doc, _MODEL_KEYS, "model")
    try:
        model = ModelConfig(**model_doc)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err), key_path="model") from None

    task = doc["task"]
    if task not in TASKS:
        raise ConfigError(
            f"unknown task '{task}'; expected one of {', '.join(TASKS)}",
            key_path="task")

    seeds = doc.get("seeds", {"master": 0})
    if isinstance(seeds, int):
        seeds = {"master": seeds}
    if not isinstance(seeds, dict):
        raise ConfigError("expected an object or integer", key_path="seeds")
    _reject_unknown(seeds, _SEED_KEYS, "seeds")
    seeds = {"master": int(seeds.get("master", 0))}

    tolerances = doc.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("expected an object", key_path="tolerances")
    _reject_unknown(tolerances, _TOLERANCE_KEYS, "tolerances")

    return ExperimentConfig(
        model=model,
        sensors=_parse_sensors(doc["sensors"]),
        task=task,
        seeds=seeds,
        tolerances=dict(tolerances),
        output_dir=doc.get("output_dir"),
        observations=doc.get("observations"),
        state_file=doc.get("state_file"),
    )


def load_config(path):
    """Parse a JSON config file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}") from None
    return parse_config(doc)
