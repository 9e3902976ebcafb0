"""Output formats.

Tables are comma-separated with one ``# digest=<hex> ...`` line on top and
a header row.  Summaries are JSON objects, one per line.  Every run
directory also holds ``manifest.json``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

__all__ = [
    "TOOL_VERSION",
    "RunManifest",
    "write_table",
    "read_table",
    "append_jsonl",
    "write_jsonl",
    "read_jsonl",
    "write_manifest",
    "read_manifest",
    "REPLICA_COLUMNS",
    "ESTIMATE_COLUMNS",
]

TOOL_VERSION = "0.1.0"

REPLICA_COLUMNS = ("replica_id", "t", "r", "ball_radius", "radius", "censored", "empty", "total_mass", "peak", "overflow", "seed")
ESTIMATE_COLUMNS = ("d", "t", "r", "p_hat", "ci_lo", "ci_hi", "n_effective", "successes", "censored_count", "cap_hit_count")


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int | None
    tolerances: dict
    outputs: list = field(default_factory=list)
    tool_version: str = TOOL_VERSION
    wall_clock: float = 0.0
    started: str = ""
    host: str = field(default_factory=platform.node)
    extra: dict = field(default_factory=dict)


def _cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def write_table(path, columns, rows, digest: str, meta: dict | None = None):
    """Write ``rows`` (sequences or dicts) with the digest comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = f"# digest={digest}"
    for k, v in (meta or {}).items():
        head += f" {k}={v}"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(head + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            w.writerow([_cell(v) for v in row])
    return path


def read_table(path):
    """Return ``(meta, rows)``; meta holds the digest line's key=value pairs."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing '# digest=' line")
        meta = dict(kv.split("=", 1) for kv in first[1:].split() if "=" in kv)
        rows = list(csv.DictReader(fh))
    return meta, rows


def _default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, float) and math.isinf(o):
        return "inf"
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _clean(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if hasattr(o, "tolist"):
        return _clean(o.tolist())
    if hasattr(o, "item") and callable(o.item):
        return o.item()
    return o


def append_jsonl(path, obj):
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(_clean(obj), sort_keys=True, default=_default) + "\n")


def write_jsonl(path, objs):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(_clean(obj), sort_keys=True, default=_default) + "\n")
    return path


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_manifest(directory, manifest: RunManifest):
    path = Path(directory) / "manifest.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(asdict(manifest)), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(directory) -> RunManifest:
    with open(Path(directory) / "manifest.json", encoding="utf-8") as fh:
        data = json.load(fh)
    return RunManifest(**data)


def now_iso() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime())


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
