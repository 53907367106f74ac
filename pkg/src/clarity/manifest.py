"""Run manifests: what ran, on which inputs, producing which outputs.

A manifest is a JSON file recording the command, configuration, seed,
sha256 digests of every input and output file, and wall time. Re-running the
same command on the same inputs should reproduce the same output digests.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def file_digest(path: str | Path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(65536), b""):
            hasher.update(block)
    return hasher.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int | None = None
    config: dict = field(default_factory=dict)
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    started_unix: float = field(default_factory=time.time)
    wall_seconds: float = 0.0

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = file_digest(path)

    def finish(self) -> None:
        self.wall_seconds = time.time() - self.started_unix

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / MANIFEST_NAME
        payload = {
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "stats": self.stats,
            "started_unix": self.started_unix,
            "wall_seconds": self.wall_seconds,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")
        return path


def read_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text("utf-8"))
