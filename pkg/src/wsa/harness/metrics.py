"""Append-only JSONL metric streams."""
from __future__ import annotations

import json
import math
import os

from ..errors import StateError


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and getattr(value, "shape", None) == ():
        return _clean(value.item())
    return value


class MetricsWriter:
    """One JSON object per line; global step must never go backwards.

    Rows are deterministic functions of the run.  Wall-clock readings go to
    a separate ``*.time.jsonl`` stream so reruns can be compared byte for byte.
    """

    def __init__(self, path):
        self.path = str(path)
        self.time_path = self.path.replace(".jsonl", "") + ".time.jsonl"
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        for p in (self.path, self.time_path):
            open(p, "w").close()
        self.last_step = -1

    def write(self, row: dict, seconds=None):
        step = int(row["step"])
        if step < self.last_step:
            raise StateError(f"metrics step went backwards: {step} after {self.last_step}")
        self.last_step = step
        with open(self.path, "a") as fh:
            fh.write(json.dumps(_clean(row), sort_keys=True) + "\n")
        if seconds is not None:
            with open(self.time_path, "a") as fh:
                fh.write(json.dumps({"step": step, "event": row.get("event", ""), "seconds": round(seconds, 3)}) + "\n")


def read_metrics(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
