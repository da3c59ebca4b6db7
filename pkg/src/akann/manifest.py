"""Run manifests and CSV emission with a manifest hash in the header."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, Optional, Sequence, TextIO

import numpy as np

SCHEMA_VERSION = 1
PACKAGE_VERSION = "0.1.0"


@dataclass
class RunManifest:
    """What produced an output file; the hash covers everything but timing and host."""

    command: Sequence[str]
    seed: int
    config_hashes: Dict[str, str] = field(default_factory=dict)
    dataset_hashes: Dict[str, str] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=dict)
    started: float = field(default_factory=time.time)
    wall_clock: float = 0.0
    host: str = field(default_factory=platform.node)

    def __post_init__(self):
        if not self.versions:
            self.versions = {"akann": PACKAGE_VERSION, "numpy": np.__version__,
                             "python": platform.python_version(), "schema": str(SCHEMA_VERSION)}

    def finish(self) -> "RunManifest":
        self.wall_clock = time.time() - self.started
        return self

    def digest(self) -> str:
        body = {"command": list(self.command), "seed": self.seed,
                "config_hashes": self.config_hashes, "dataset_hashes": self.dataset_hashes,
                "versions": self.versions}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self) -> str:
        d = asdict(self)
        d["command"] = list(self.command)
        d["digest"] = self.digest()
        return json.dumps(d, indent=2, sort_keys=True)


def write_csv(rows: Iterable[dict], columns: Sequence[str], manifest: Optional[RunManifest] = None,
              out: Optional[TextIO] = None) -> str:
    """Render rows as CSV behind a ``#`` header naming the schema and manifest hash."""
    buf = io.StringIO()
    head = f"# akann schema={SCHEMA_VERSION}"
    if manifest is not None:
        head += f" manifest={manifest.digest()}"
    buf.write(head + "\n")
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(text: str):
    """Parse CSV written by :func:`write_csv`; returns (header comment, rows)."""
    lines = text.splitlines()
    head = lines[0] if lines and lines[0].startswith("#") else ""
    body = lines[1:] if head else lines
    return head, list(csv.DictReader(body))


def strip_columns(text: str, drop: Sequence[str]) -> str:
    """CSV text without the named columns, for comparing runs modulo timing."""
    head, rows = read_csv(text)
    if not rows:
        return text
    cols = [c for c in rows[0].keys() if c not in drop]
    return head + "\n" + "\n".join(",".join(r[c] for c in cols) for r in rows)


def log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)
