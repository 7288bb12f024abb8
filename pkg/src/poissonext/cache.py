"""Disk cache for expensive precomputed operators.

Artifacts (the universal extension matrix, near-field potential tables)
depend only on hard-coded reference geometry, so they are keyed by a
metadata dict embedded in the npz; a mismatch (different eps, bits,
stencil hash, table layout) silently misses and triggers a rebuild.
Set POISSONEXT_CACHE to relocate the directory.
"""
import json
import os
from pathlib import Path

import numpy as np


def cache_dir() -> Path:
    root = os.environ.get("POISSONEXT_CACHE")
    p = Path(root) if root else Path.home() / ".cache" / "poissonext"
    p.mkdir(parents=True, exist_ok=True)
    return p


def save_arrays(name: str, arrays: dict, meta: dict) -> Path:
    path = cache_dir() / (name + ".npz")
    blob = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez_compressed(path, __meta__=blob, **arrays)
    return path


def load_arrays(name: str, expected_meta: dict):
    """Cached arrays for `name`, or None on miss/typing mismatch."""
    path = cache_dir() / (name + ".npz")
    if not path.exists():
        return None
    try:
        with np.load(path) as z:
            meta = json.loads(bytes(bytearray(z["__meta__"])).decode())
            if meta != json.loads(json.dumps(expected_meta, sort_keys=True)):
                return None
            return {k: z[k].copy() for k in z.files if k != "__meta__"}
    except (OSError, ValueError, KeyError):
        return None
