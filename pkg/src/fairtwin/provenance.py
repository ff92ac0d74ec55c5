"""Provenance sidecars: every produced artifact records how to reproduce it."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()


def write_sidecar(output_path, command: str, config: dict, seed=None, inputs: dict | None = None) -> Path:
    """Write ``<output>.provenance.json`` next to the artifact."""
    from . import __version__

    output_path = Path(output_path)
    payload = {
        "artifact": output_path.name,
        "artifact_sha256": file_hash(output_path),
        "command": command,
        "config": config,
        "config_sha256": config_hash(config),
        "seed": seed,
        "inputs": {k: file_hash(v) for k, v in (inputs or {}).items()},
        "fairtwin_version": __version__,
    }
    sidecar = output_path.with_name(output_path.name + ".provenance.json")
    sidecar.write_text(json.dumps(payload, indent=2, default=str) + "\n")
    return sidecar
