"""Structured pass/fail reports emitted by the check operations.

Every check returns a report rather than raising: a failed hypothesis is a
result, not an error.  Reports are plain dataclasses so they serialize to
JSON with ``dataclasses.asdict``.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_ID = "volterra-lab/report.v1"


@dataclass
class CheckReport:
    """Outcome of one numerical certificate.

    check_id identifies the property being certified (stable string, e.g.
    "kernel-regularity"); measured holds the quantities that were computed,
    tolerances the thresholds they were held against.
    """

    check_id: str
    passed: bool
    measured: dict[str, Any] = field(default_factory=dict)
    tolerances: dict[str, Any] = field(default_factory=dict)
    witness: Any = None
    grid_meta: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["schema"] = SCHEMA_ID
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), default=_json_default, **kwargs)

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        return f"[{state}] {self.check_id}"


def _json_default(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if hasattr(obj, "item"):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    return str(obj)


def dump_report(report, path) -> None:
    """Write a report (anything with to_dict) to a JSON file."""
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, default=_json_default)
        fh.write("\n")
