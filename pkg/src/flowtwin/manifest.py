"""Run manifests: enough provenance to reproduce any artifact.

Input digests are recorded before the command executes; outputs and status
are filled in afterwards.  Manifests are metadata, never inputs, so they
may carry timestamps while the artifacts themselves stay byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int | None = None
    inputs: dict = field(default_factory=dict)     # path -> sha256
    outputs: list = field(default_factory=list)
    status: str = "queued"
    run_id: str = ""
    started_at: float = 0.0
    finished_at: float = 0.0
    error: str = ""

    _ORDER = ("queued", "running", "done", "failed")

    @classmethod
    def start(cls, command: str, input_paths, seed=None) -> "RunManifest":
        inputs = {str(p): file_digest(p) for p in input_paths if p and os.path.exists(p)}
        stamp = hashlib.sha256(
            json.dumps({"command": command, "inputs": inputs, "seed": seed},
                       sort_keys=True).encode()
        ).hexdigest()[:12]
        m = cls(command=command, seed=seed, inputs=inputs,
                run_id=f"{command}-{stamp}", started_at=time.time())
        m.transition("running")
        return m

    def transition(self, status: str) -> None:
        if self._ORDER.index(status) < self._ORDER.index(self.status):
            raise ValueError(f"status cannot move backwards: {self.status} -> {status}")
        self.status = status

    def finish(self, outputs, status: str = "done", error: str = "") -> None:
        self.outputs = [str(p) for p in outputs]
        self.error = error
        self.finished_at = time.time()
        self.transition(status)

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "error": self.error,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
