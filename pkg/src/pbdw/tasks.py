"""Experiment drivers: each task turns a config into files on disk.

Artifacts are pure functions of the resolved config (which includes the
seed), so rerunning a task overwrites every file with identical bytes.
"""

import os
import platform

import numpy as np

from . import persist
from .affine import AffineRecoveryEstimator, estimate_delta, net_from_grid
from .config import ExperimentConfig
from .exceptions import ConfigError
from .greedy import (greedy_hierarchy, poor_mans_select, sparse_random_training,
                     tensor_grid_training, weak_greedy)
from .hashing import canonical_json
from .inverse import LsConfig, estimate_parameter
from .model import build_model
from .oracle import manifold_net, run_benchmark, wc_error_bruteforce
from .piecewise import PartitionBudget, build_partition, recover_pw
from .sensing import build_system


def _tol(cfg, key, default):
    return cfg.tolerances.get(key, default)


def _training(cfg, default_per_dim=9):
    mode = _tol(cfg, "train_mode", "tensor")
    if mode == "tensor":
        return tensor_grid_training(cfg.model.d_y,
                                    int(_tol(cfg, "train_per_dim",
                                             default_per_dim)))
    if mode == "random":
        return sparse_random_training(cfg.model.d_y,
                                      int(_tol(cfg, "n_train", 200)),
                                      seed=cfg.seeds["master"])
    raise ConfigError(f"unknown train_mode '{mode}'",
                      key_path="tolerances.train_mode")


def _greedy_space(model, cfg, n_max=None):
    training = _training(cfg)
    if n_max is None:
        n_max = int(_tol(cfg, "n_max", min(2 * model.d_y + 1, 12)))
    return weak_greedy(model, training, n_max=n_max,
                       tol=float(_tol(cfg, "tol", 0.0)))


def _poor_mans(model, system, cfg):
    space, trace = _greedy_space(model, cfg)
    hier = greedy_hierarchy(model, space, trace)
    return poor_mans_select(model, system, hier), space, trace


def _fit_affine(model, system, cfg):
    space, _ = _greedy_space(model, cfg)
    net_grid = int(_tol(cfg, "net_grid", 9))
    net = net_from_grid(model, net_grid)
    probe = int(_tol(cfg, "probe_grid", 2 * net_grid - 1))
    estimate_delta(model, net, probe)
    est = AffineRecoveryEstimator(tol_opt=float(_tol(cfg, "tol_opt", 1e-6)))
    return est.fit(system, net, space.basis, eta=_tol(cfg, "eta", None))


def _build_pw(model, system, cfg):
    n_max = _tol(cfg, "n_max", None)
    budget = PartitionBudget(
        max_cells=int(_tol(cfg, "max_cells", 64)),
        n_max=None if n_max is None else int(n_max),
        tensor_k=int(_tol(cfg, "tensor_k", 5)),
        training_points=int(_tol(cfg, "training_points", 120)))
    return build_partition(model, system, float(_tol(cfg, "eps", 1e-2)),
                           budget=budget, seed=cfg.seeds["master"],
                           split_rule=_tol(cfg, "split_rule", "variance"))


# ---------------------------------------------------------------------------
# tasks


def task_greedy_decay(model, system, cfg, out_dir):
    space, trace = _greedy_space(model, cfg)
    hier = greedy_hierarchy(model, space, trace)
    pick = poor_mans_select(model, system, hier)
    persist.write_trace_csv(os.path.join(out_dir, "decay.csv"), trace)
    persist.write_selection_csv(os.path.join(out_dir, "selection.csv"),
                                pick.rows)
    persist.save_basis(os.path.join(out_dir, "basis.npz"), space.basis,
                       {"model": model.config_hash,
                        "seed": cfg.seeds["master"], "n": space.n})
    r, big_r = model.bounds
    return {
        "task": "greedy_decay", "n": space.n,
        "eps_final": float(trace.eps_history[-1]),
        "surrogate_final": float(trace.surrogate_max_history[-1]),
        "n_star": pick.n_star,
        "certificate": pick.rows[pick.n_star - 1]["product"],
        "bounds": {"r": r, "R": big_r},
        "deflated": int(len(trace.deflated)),
    }


def task_fit_affine(model, system, cfg, out_dir, competitor=None):
    est = _fit_affine(model, system, cfg)
    persist.save_affine_map(os.path.join(out_dir, "map"), est,
                            manifest={"model": model.config_hash,
                                      "seed": cfg.seeds["master"]})
    summary = {
        "task": "fit_affine",
        "objective": est.training_objective_,
        "lower_bound": est.lower_bound_,
        "suboptimality": est.suboptimality_,
        "certified": bool(est.certified_),
        "norm_b": est.norm_b_,
        "delta": est.delta_,
        "certificate": est.certificate(),
        "p": int(est.z_.shape[0]),
    }
    if competitor == "poor-mans":
        pick, _, _ = _poor_mans(model, system, cfg)
        product = pick.rows[pick.n_star - 1]["product"]
        summary["competitor"] = {
            "method": "one-space(poor-mans)",
            "certificate": product,
            "dominated": bool(est.training_objective_
                              <= product * (1.0 + 1e-9)),
        }
    elif competitor is not None:
        raise ConfigError(f"unknown competitor '{competitor}'",
                          key_path="competitor")
    return summary


def task_build_pw(model, system, cfg, out_dir):
    pm = _build_pw(model, system, cfg)
    persist.save_partition(os.path.join(out_dir, "partition"), pm,
                           manifest={"model": model.config_hash})
    return {
        "task": "build_pw", "cells": pm.size,
        "certified": bool(pm.certified),
        "worst_certificate": pm.worst_certificate,
        "target_eps": pm.target_eps,
        "max_n_k": max(c.n_k for c in pm.cells),
    }


def task_estimate_state(model, system, cfg, out_dir):
    if not cfg.observations:
        raise ConfigError("estimate_state needs an observations file",
                          key_path="observations")
    observations = persist.ingest_observations(cfg.observations, system)
    pick, _, _ = _poor_mans(model, system, cfg)
    records = []
    for k, obs in enumerate(observations):
        u_star = pick.map.predict(obs.w_coords[None, :])[0]
        persist.export_state_csv(
            os.path.join(out_dir, f"state_{k:03d}.csv"), u_star)
        records.append({
            "index": k,
            "norm": float(model.space.norm(u_star)),
            "certificate": pick.rows[pick.n_star - 1]["product"],
        })
    return {
        "task": "estimate_state", "observations": len(observations),
        "n_star": pick.n_star,
        "certificate": pick.rows[pick.n_star - 1]["product"],
        "records": records,
    }


def task_estimate_param(model, system, cfg, out_dir):
    ls_cfg = LsConfig(tol=float(_tol(cfg, "ls_tol", 1e-8)),
                      max_iter=int(_tol(cfg, "ls_max_iter", 2000)))
    wc = None
    if cfg.state_file:
        states = [persist.import_state_csv(cfg.state_file,
                                           expected_dim=model.space.dim)]
    elif cfg.observations:
        observations = persist.ingest_observations(cfg.observations, system)
        pick, _, _ = _poor_mans(model, system, cfg)
        wc = pick.rows[pick.n_star - 1]["product"]
        states = [pick.map.predict(o.w_coords[None, :])[0]
                  for o in observations]
    else:
        raise ConfigError(
            "estimate_param needs a state_file or an observations file",
            key_path="state_file")
    records = []
    for k, u_bar in enumerate(states):
        res = estimate_parameter(model, u_bar, wc_certificate=wc,
                                 ls_cfg=ls_cfg)
        records.append({
            "index": k,
            "y_bar": [float(v) for v in res.y_bar],
            "s_value": res.s_value,
            "chain_bound": res.chain_bound,
            "kkt_residual": res.projection.kkt_residual,
            "converged": bool(res.projection.converged),
        })
    return {"task": "estimate_param", "states": len(states),
            "kappa": model.bounds[1] / model.bounds[0],
            "records": records}


def task_bench_oracle(model, system, cfg, out_dir):
    pick, _, _ = _poor_mans(model, system, cfg)
    eps_list = _tol(cfg, "eps_list", [0.0, 1e-3, 1e-2])
    grid = _tol(cfg, "grid_per_dim", None)
    report = run_benchmark(
        model, system,
        estimators={"one-space(poor-mans)": pick.map},
        eps_list=[float(e) for e in eps_list],
        grid_per_dim=None if grid is None else int(grid),
        n_slice_probes=int(_tol(cfg, "n_slice_probes", 5)),
        seed=cfg.seeds["master"])
    doc = report.as_dict()
    doc["certificates"] = {
        "one-space(poor-mans)": pick.rows[pick.n_star - 1]["product"]}
    with open(os.path.join(out_dir, "benchmark.json"), "w",
              encoding="utf-8") as fh:
        fh.write(canonical_json(doc))
        fh.write("\n")
    return {"task": "bench_oracle", **doc}


def task_compare_all(model, system, cfg, out_dir):
    pick, _, _ = _poor_mans(model, system, cfg)
    affine = _fit_affine(model, system, cfg)
    pm = _build_pw(model, system, cfg)
    kappa = model.bounds[1] / model.bounds[0]

    grid = _tol(cfg, "grid_per_dim", None)
    net = manifold_net(model, grid_per_dim=None if grid is None
                       else int(grid))

    class _PwMap:
        def predict(self, W):
            return np.vstack([recover_pw(pm, w).u_star
                              for w in np.atleast_2d(W)])

    rows = []
    for method, est, cert in (
            ("one-space(poor-mans)", pick.map,
             pick.rows[pick.n_star - 1]["product"]),
            ("optimal-affine", affine, affine.certificate()),
            ("piecewise(eps)", _PwMap(), (1.0 + kappa) *
             pm.worst_certificate)):
        wc, _ = wc_error_bruteforce(net, system, est)
        rows.append({"method": method, "certificate": float(cert),
                     "wc_lb": wc})
    persist.write_comparison_csv(os.path.join(out_dir, "comparison.csv"),
                                 rows)
    return {
        "task": "compare_all",
        "net_size": int(net.states.shape[1]),
        "rows": rows,
        "consistent": bool(all(
            r["wc_lb"] <= r["certificate"] * (1.0 + 1e-6) for r in rows)),
    }


_RUNNERS = {
    "greedy_decay": task_greedy_decay,
    "fit_affine": task_fit_affine,
    "build_pw": task_build_pw,
    "estimate_state": task_estimate_state,
    "estimate_param": task_estimate_param,
    "bench_oracle": task_bench_oracle,
    "compare_all": task_compare_all,
}


def execute(cfg: ExperimentConfig, out_dir, competitor=None):
    """Run the configured task; write manifest and summary; return summary."""
    os.makedirs(out_dir, exist_ok=True)
    model = build_model(cfg.model)
    system = build_system(model, cfg.sensors)

    runner = _RUNNERS[cfg.task]
    if cfg.task == "fit_affine":
        summary = runner(model, system, cfg, out_dir, competitor=competitor)
    elif competitor is not None:
        raise ConfigError("--competitor only applies to fit_affine",
                          key_path="competitor")
    else:
        summary = runner(model, system, cfg, out_dir)

    manifest = {
        "config": cfg.resolved(),
        "config_hash": cfg.config_hash,
        "model_hash": model.config_hash,
        "seed": cfg.seeds["master"],
        "versions": _versions(),
    }
    persist.write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    with open(os.path.join(out_dir, "summary.json"), "w",
              encoding="utf-8") as fh:
        fh.write(canonical_json(summary))
        fh.write("\n")
    return summary


def _versions():
    import scipy

    from . import __version__
    return {
        "pbdw": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }
