"""Mid-training changes to the model pool."""
from __future__ import annotations

import json
from dataclasses import dataclass

from ..errors import ConfigError
from ..pretrain import CANONICAL_ORDER

OPS = ("add", "remove")


@dataclass(frozen=True)
class ScaleEvent:
    step: int
    op: str
    index: int   # add: position in the canonical encoder order; remove: pool slot

    def to_dict(self):
        return {"step": self.step, "op": self.op, "index": self.index}


class ScaleSchedule:
    """Ordered (step, add|remove, index) events, checked against a starting pool."""

    def __init__(self, events, initial):
        self.events = [e if isinstance(e, ScaleEvent) else ScaleEvent(int(e["step"]), e["op"], int(e["index"]))
                       for e in events]
        self.initial = [int(i) for i in initial]
        self.validate()

    def validate(self):
        if not self.initial:
            raise ConfigError("a schedule must start with at least one model")
        pool = list(self.initial)          # canonical indices per slot
        active = [True] * len(pool)
        last = 0
        for e in self.events:
            if e.op not in OPS:
                raise ConfigError(f"unknown schedule op {e.op!r}")
            if e.step <= last:
                raise ConfigError(f"schedule steps must be positive and strictly increasing (got {e.step} after {last})")
            last = e.step
            if e.op == "add":
                if not 0 <= e.index < len(CANONICAL_ORDER):
                    raise ConfigError(f"cannot add model {e.index}: the encoder set has {len(CANONICAL_ORDER)}")
                if any(a and c == e.index for c, a in zip(pool, active)):
                    raise ConfigError(f"model {e.index} is already active at step {e.step}")
                pool.append(e.index)
                active.append(True)
            else:
                if not 0 <= e.index < len(pool) or not active[e.index]:
                    raise ConfigError(f"step {e.step}: pool slot {e.index} is not active")
                if sum(active) == 1:
                    raise ConfigError(f"step {e.step}: cannot remove the last active model")
                active[e.index] = False
        return self

    @property
    def initial_kinds(self):
        return [CANONICAL_ORDER[i] for i in self.initial]

    def due(self, lo, hi):
        """Events with lo < step <= hi."""
        return [e for e in self.events if lo < e.step <= hi]

    def to_dict(self):
        return {"initial": self.initial, "events": [e.to_dict() for e in self.events]}

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "events" not in d:
            raise ConfigError("a schedule needs an 'events' list")
        return cls(d["events"], d.get("initial", [0]))

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read schedule {path}: {exc}") from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad schedule file {path}: {exc}") from exc

    @classmethod
    def adding(cls, every=50_000, n=len(CANONICAL_ORDER)):
        """Start with one model and add the rest in canonical order."""
        return cls([ScaleEvent(every * k, "add", k) for k in range(1, n)], [0])

    @classmethod
    def removing(cls, every=50_000, n=len(CANONICAL_ORDER)):
        """Start with all models and drop the earliest until one remains."""
        return cls([ScaleEvent(every * k, "remove", k - 1) for k in range(1, n)], list(range(n)))
