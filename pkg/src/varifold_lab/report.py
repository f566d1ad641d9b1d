"""Premise/conclusion bookkeeping shared by all checkers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

PASS = "pass"
PREMISE_VIOLATED = "premise violated"
CONCLUSION_VIOLATED = "conclusion violated"

EXIT_CODES = {PASS: 0, PREMISE_VIOLATED: 2, CONCLUSION_VIOLATED: 3}
REPORT_VERSION = 1


def _compare(value, relation, bound, tol):
    if relation == "<=":
        return value <= bound + tol
    if relation == "<":
        return value < bound + tol
    if relation == ">=":
        return value >= bound - tol
    if relation == ">":
        return value > bound - tol
    if relation == "==":
        return abs(value - bound) <= tol
    raise ValueError("unknown relation %r" % relation)


@dataclass
class Check:
    name: str
    value: Any
    relation: str = "<="
    bound: Any = None
    ok: bool = True
    detail: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "value": jsonable(self.value), "relation": self.relation,
                "bound": jsonable(self.bound), "ok": bool(self.ok), "detail": self.detail}


def check(name: str, value, relation: str, bound, tol: float = 0.0, detail: str = "") -> Check:
    value = float(value) if isinstance(value, (np.floating, np.integer)) else value
    bound = float(bound) if isinstance(bound, (np.floating, np.integer)) else bound
    return Check(name, value, relation, bound, bool(_compare(value, relation, bound, tol)), detail)


def flag(name: str, ok: bool, detail: str = "") -> Check:
    return Check(name, bool(ok), "is", True, bool(ok), detail)


@dataclass
class Report:
    """Outcome of one certification: premises are checked before conclusions.

    Conclusions are evaluated even when a premise fails, so negative controls
    still show what happened; the status keeps the two outcomes apart.
    """

    command: str
    premises: list = field(default_factory=list)
    conclusions: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    @property
    def premises_ok(self) -> bool:
        return all(c.ok for c in self.premises)

    @property
    def conclusions_ok(self) -> bool:
        return all(c.ok for c in self.conclusions)

    @property
    def status(self) -> str:
        if not self.premises_ok:
            return PREMISE_VIOLATED
        if not self.conclusions_ok:
            return CONCLUSION_VIOLATED
        return PASS

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def failures(self) -> list:
        return [c for c in self.premises + self.conclusions if not c.ok]

    def to_json(self, constants: Optional[dict] = None) -> dict:
        return {
            "version": REPORT_VERSION,
            "command": self.command,
            "constants": constants if constants is not None else {},
            "premises": [c.to_json() for c in self.premises],
            "conclusions": [c.to_json() for c in self.conclusions],
            "status": self.status,
            "pass": self.passed,
            "data": jsonable(self.data),
        }


def jsonable(obj):
    """Recursively convert numpy values and non-finite floats for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if hasattr(obj, "to_json"):
        return jsonable(obj.to_json())
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True)


def series_csv(columns: dict) -> str:
    """CSV text for equally long named columns."""
    names = list(columns)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*(columns[k] for k in names)):
        w.writerow(["%.17g" % float(v) for v in row])
    return buf.getvalue()
