"""Deterministic writers for run artifacts.

Data files (CSV, JSON summaries) contain no wall-clock information, so two
runs with the same configuration produce identical bytes. The only
timestamp lives on the ``"created_at"`` line of ``manifest.json``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

from . import __version__


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str, bool)):
        return obj.value
    return obj


class RunWriter:
    def __init__(self, out_dir):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def json(self, name: str, payload) -> Path:
        path = self.out / name
        path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=True) + "\n")
        self.written.append(name)
        return path

    def csv(self, name: str, rows: list[dict], fieldnames=None) -> Path:
        path = self.out / name
        fieldnames = fieldnames or (list(rows[0]) if rows else [])
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _plain(v) for k, v in row.items()})
        self.written.append(name)
        return path

    def manifest(self, experiment: str, resolved_config: dict, status: str) -> Path:
        path = self.out / "manifest.json"
        body = json.dumps(
            {"experiment": experiment, "package_version": __version__, "status": status,
             "config": _plain(resolved_config), "files": sorted(self.written)},
            indent=2, sort_keys=True,
        )
        stamp = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
        # keep the timestamp on its own first line inside the object
        path.write_text('{\n  "created_at": "' + stamp + '",' + body[1:] + "\n")
        return path
