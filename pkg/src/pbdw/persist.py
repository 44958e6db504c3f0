"""File formats: CSV import/export, basis and map persistence, manifests.

Everything written here is a pure function of its inputs: floats are
rendered with ``repr`` (shortest round-trip form), keys are sorted, and
no timestamps are recorded, so rerunning the same experiment rewrites
byte-identical artifacts.
"""

import csv
import json
import os

import numpy as np

from .exceptions import IngestError
from .hashing import canonical_json
from .onespace import OneSpaceEstimator, ReducedSpace
from .sensing import Observation


def _fmt(x):
    return repr(float(x))


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path, payload):
    """Canonical-JSON manifest; sorted keys, no volatile fields."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# states as CSV (node, value)


def export_state_csv(path, u):
    u = np.asarray(u, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["node", "value"])
        for i, v in enumerate(u):
            writer.writerow([i, _fmt(v)])


def import_state_csv(path, expected_dim=None):
    """Read a (node, value) table back into a state vector.

    Nodes must be 0..dim-1 in order; violations raise IngestError with
    the offending line number (1-based, header is line 1).
    """
    values = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "value"]:
            raise IngestError("expected header 'node,value'", line=1)
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise IngestError(f"expected 2 fields, got {len(row)}",
                                  line=ln)
            try:
                node = int(row[0])
                val = float(row[1])
            except ValueError as err:
                raise IngestError(str(err), line=ln) from None
            if node != len(values):
                raise IngestError(
                    f"expected node {len(values)}, found {node}", line=ln)
            values.append(val)
    u = np.asarray(values, dtype=float)
    if expected_dim is not None and u.shape[0] != expected_dim:
        raise IngestError(
            f"expected {expected_dim} nodes, found {u.shape[0]}")
    return u


# ---------------------------------------------------------------------------
# observations as CSV (sensor_id, value)


def export_observations_csv(path, observations):
    """Write raw sensor readings, one block of m rows per observation."""
    if isinstance(observations, Observation):
        observations = [observations]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sensor_id", "value"])
        for obs in observations:
            for i, v in enumerate(np.asarray(obs.raw, dtype=float)):
                writer.writerow([i, _fmt(v)])


def ingest_observations(path, system):
    """Parse (sensor_id, value) rows into Observation objects.

    Rows come in blocks: sensor ids must run 0..m-1 in order, one block
    per observation.  Mismatches raise IngestError carrying the line
    number and naming the expected and found values.
    """
    m = system.m
    observations = []
    block = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != \
                ["sensor_id", "value"]:
            raise IngestError("expected header 'sensor_id,value'", line=1)
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise IngestError(f"expected 2 fields, got {len(row)}",
                                  line=ln)
            try:
                sid = int(row[0])
                val = float(row[1])
            except ValueError as err:
                raise IngestError(str(err), line=ln) from None
            if sid != len(block):
                raise IngestError(
                    f"expected sensor_id {len(block)}, found {sid}",
                    line=ln)
            if sid >= m:
                raise IngestError(
                    f"sensor_id {sid} out of range: system has {m} sensors",
                    line=ln)
            block.append(val)
            if len(block) == m:
                raw = np.asarray(block, dtype=float)
                observations.append(Observation(
                    w_coords=system.coords_from_raw(raw), raw=raw))
                block = []
    if block:
        raise IngestError(
            f"trailing block: expected {m} readings per observation, "
            f"found {len(block)}")
    return observations


# ---------------------------------------------------------------------------
# greedy traces and selection tables


def write_trace_csv(path, trace):
    """Decay table: one row per greedy round."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "selected_point", "surrogate_max",
                         "eps_certified"])
        n_rounds = len(trace.surrogate_max_history)
        for n in range(n_rounds):
            if n < len(trace.selected_params):
                point = ";".join(_fmt(c) for c in trace.selected_params[n])
            else:
                point = ""
            writer.writerow([n, point,
                             _fmt(trace.surrogate_max_history[n]),
                             _fmt(trace.eps_history[n])])


def write_selection_csv(path, rows):
    """Stability table of a space hierarchy: n, beta, mu, eps, product."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "beta", "mu", "eps", "product"])
        for r in rows:
            writer.writerow([r["n"], _fmt(r["beta"]), _fmt(r["mu"]),
                             _fmt(r["eps"]), _fmt(r["product"])])


def write_comparison_csv(path, rows):
    """Estimator comparison: method, certificate, oracle wc lower bound."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "certificate", "wc_lb"])
        for r in rows:
            writer.writerow([r["method"], _fmt(r["certificate"]),
                             _fmt(r["wc_lb"])])


# ---------------------------------------------------------------------------
# basis and fitted-map persistence


def save_basis(path, basis, manifest):
    """Basis matrix plus its provenance manifest in one npz archive."""
    np.savez(path, basis=np.asarray(basis, dtype=float),
             manifest=canonical_json(manifest))


def load_basis(path):
    with np.load(path, allow_pickle=False) as payload:
        return payload["basis"], json.loads(str(payload["manifest"]))


def save_affine_map(directory, estimator, manifest=None):
    """Persist a fitted affine recovery map: z, B, complement basis."""
    os.makedirs(directory, exist_ok=True)
    np.savez(os.path.join(directory, "map.npz"),
             z=estimator.z_, b_matrix=estimator.b_matrix_,
             complement_basis=estimator.complement_basis_)
    payload = {
        "kind": "affine_map",
        "m": int(estimator.system_.m),
        "p": int(estimator.z_.shape[0]),
        "training_objective": estimator.training_objective_,
        "lower_bound": estimator.lower_bound_,
        "certified": bool(estimator.certified_),
        "norm_b": estimator.norm_b_,
        "delta": estimator.delta_,
        "net_size": int(estimator.net_size_),
    }
    payload.update(manifest or {})
    write_manifest(os.path.join(directory, "manifest.json"), payload)


def load_affine_map(directory, system):
    """Rebuild a fitted affine recovery map against ``system``."""
    from .affine import AffineRecoveryEstimator

    manifest = read_manifest(os.path.join(directory, "manifest.json"))
    if manifest.get("kind") != "affine_map":
        raise IngestError(f"{directory}: not an affine map artifact")
    if manifest["m"] != system.m:
        raise IngestError(
            f"map was fitted for m = {manifest['m']}, system has "
            f"m = {system.m}")
    with np.load(os.path.join(directory, "map.npz"),
                 allow_pickle=False) as payload:
        est = AffineRecoveryEstimator()
        est.system_ = system
        est.z_ = payload["z"]
        est.b_matrix_ = payload["b_matrix"]
        est.complement_basis_ = payload["complement_basis"]
    est.training_objective_ = manifest["training_objective"]
    est.lower_bound_ = manifest["lower_bound"]
    est.certified_ = manifest["certified"]
    est.norm_b_ = manifest["norm_b"]
    est.delta_ = manifest["delta"]
    est.net_size_ = manifest["net_size"]
    est.suboptimality_ = None
    est.objective_history_ = None
    est.eta_ = None
    return est


# ---------------------------------------------------------------------------
# partition persistence


def save_partition(directory, pm, manifest=None):
    """Persist a partitioned model: cell table as JSON, bases as npz."""
    os.makedirs(directory, exist_ok=True)
    cells = []
    arrays = {}
    for k, cell in enumerate(pm.cells):
        cells.append({
            "box": cell.box.tolist(),
            "path": list(cell.path),
            "n_k": int(cell.n_k),
            "eps_k": cell.eps_k,
            "mu_k": cell.mu_k,
            "certificate": cell.certificate,
            "certified": bool(cell.certified),
        })
        arrays[f"basis_{k}"] = cell.local_space.basis
        arrays[f"anchor_{k}"] = cell.local_space.anchor
    write_manifest(os.path.join(directory, "partition.json"), {
        "kind": "partition",
        "target_eps": pm.target_eps,
        "seed": int(pm.seed),
        "certified": bool(pm.certified),
        "m": int(pm.system.m),
        "cells": cells,
        **(manifest or {}),
    })
    np.savez(os.path.join(directory, "bases.npz"), **arrays)


def load_partition(directory, model, system):
    """Rebuild a PartitionedModel; local maps are refit (cheap)."""
    from .piecewise import Cell, PartitionedModel

    doc = read_manifest(os.path.join(directory, "partition.json"))
    if doc.get("kind") != "partition":
        raise IngestError(f"{directory}: not a partition artifact")
    if doc["m"] != system.m:
        raise IngestError(
            f"partition was built for m = {doc['m']}, system has "
            f"m = {system.m}")
    cells = []
    with np.load(os.path.join(directory, "bases.npz"),
                 allow_pickle=False) as payload:
        for k, rec in enumerate(doc["cells"]):
            space = ReducedSpace(basis=payload[f"basis_{k}"],
                                 anchor=payload[f"anchor_{k}"],
                                 eps=rec["eps_k"])
            cells.append(Cell(
                box=np.asarray(rec["box"], dtype=float),
                path=tuple(rec["path"]),
                local_space=space,
                local_map=OneSpaceEstimator().fit(space, system),
                n_k=rec["n_k"], eps_k=rec["eps_k"], mu_k=rec["mu_k"],
                certificate=rec["certificate"],
                certified=rec["certified"]))
    return PartitionedModel(
        model=model, system=system, cells=cells,
        target_eps=doc["target_eps"], split_trace=[],
        seed=doc["seed"], certified=doc["certified"])
