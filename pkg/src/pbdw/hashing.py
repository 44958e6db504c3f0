"""Canonical JSON serialization and hashing for manifests and caches."""

import hashlib
import json

import numpy as np


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and obj == float("inf"):
        return "inf"
    return obj


def canonical_json(obj):
    """Deterministic JSON encoding: sorted keys, repr-exact floats."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def sha256_hex(obj):
    """SHA-256 of the canonical JSON encoding of ``obj``."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
