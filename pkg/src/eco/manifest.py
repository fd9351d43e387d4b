"""Run manifests: every pipeline command records its command line, config,
input hashes, and outputs so an identical invocation is checkably identical.
No timestamps on purpose -- manifests must be bit-reproducible."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _portable(p, base: Path) -> str:
    """Path as stored in a manifest: relative to the manifest's directory so
    identical runs in different directories produce identical manifests."""
    p = Path(p).resolve()
    try:
        return p.relative_to(base).as_posix()
    except ValueError:
        return p.name


def write_manifest(path, command: str, config: dict, inputs: list,
                   outputs: list, seed=None) -> dict:
    base = Path(path).resolve().parent
    manifest = {
        "command": command,
        "config": config,
        "inputs": {_portable(p, base): sha256_file(p) for p in inputs},
        "outputs": [_portable(p, base) for p in outputs],
        "seed": seed,
        "version": __version__,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest
