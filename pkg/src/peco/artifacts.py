"""Stage manifests: config echo plus SHA-256 of every input and output file."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


class ArtifactError(RuntimeError):
    """Missing, unreadable or tampered upstream artifact."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    return h.hexdigest()


def manifest_path(out_dir, stage: str) -> Path:
    return Path(out_dir) / f"{stage}.manifest.json"


def write_manifest(out_dir, stage: str, config: dict, inputs, outputs) -> Path:
    """Record a stage run.  Input keys are the paths as given; outputs are keyed by file name."""
    doc = {
        "stage": stage,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
    }
    path = manifest_path(out_dir, stage)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(out_dir, stage: str) -> dict:
    path = manifest_path(out_dir, stage)
    try:
        return json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read manifest {path}: {exc}") from exc


def verify(path) -> None:
    """Check ``path`` against every manifest in its directory that lists it as an output.

    Files no manifest knows about pass unchecked, so hand-made inputs work.
    """
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}")
    for mf in sorted(path.parent.glob("*.manifest.json")):
        try:
            outputs = json.loads(mf.read_text()).get("outputs", {})
        except (OSError, ValueError) as exc:
            raise ArtifactError(f"corrupt manifest {mf}: {exc}") from exc
        expected = outputs.get(path.name)
        if expected is not None and expected != sha256_file(path):
            raise ArtifactError(f"{path} does not match the hash recorded in {mf.name}")
