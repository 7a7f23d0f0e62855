"""Scenario-file parsing and serialization.

A scenario file is a JSON object with a single top-level array::

    {"scenarios": [
        {"weight": 0.5, "density": 1.0, "horizon": 10.0, "rate": 1.0,
         "breakpoints": [0.0, 1.0], "values": [0.0, 5.0]},
        {"weight": 0.5, "density": 1.0, "horizon": "inf", "rate": 1.0,
         "breakpoints": [0.0], "values": [1.0]}
    ]}

``horizon`` may be the string ``"inf"`` for an uncapped scenario; every other
number must be finite.  ``density`` and ``rate`` default to 1 and ``horizon``
to ``"inf"`` when omitted.  Floats are written with ``repr`` (shortest
round-trip form), so ``parse(serialize(s)) == s`` holds exactly.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

from .model import INF, InvalidScenarioError, Scenario, ScenarioSet, StepProcess, validate

_KEYS = {"weight", "density", "horizon", "rate", "breakpoints", "values"}


class ScenarioFileError(ValueError):
    """Malformed scenario file; ``location`` says where (``line:col`` or a JSON path)."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location
        self.message = message


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not allowed")


def _number(value, where, allow_inf=False):
    if allow_inf and value == "inf":
        return INF
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFileError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioFileError(where, "number must be finite")
    return value


def _numbers(value, where):
    if not isinstance(value, list) or not value:
        raise ScenarioFileError(where, "expected a nonempty array of numbers")
    return [_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def parse_scenarios(text: str, validate_set: bool = True) -> ScenarioSet:
    """Parse scenario JSON text into a :class:`ScenarioSet`.

    Raises
    ------
    ScenarioFileError
        On malformed JSON (location ``line:col``) or a schema violation
        (location is the JSON path of the offending field).
    InvalidScenarioError
        When the document parses but a scenario violates the model invariants.
    """
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"{exc.lineno}:{exc.colno}", exc.msg) from None
    except ValueError as exc:
        raise ScenarioFileError("document", str(exc)) from None
    if not isinstance(doc, dict) or "scenarios" not in doc:
        raise ScenarioFileError("document", 'expected an object with a "scenarios" array')
    entries = doc["scenarios"]
    if not isinstance(entries, list) or not entries:
        raise ScenarioFileError("scenarios", "expected a nonempty array")
    scenarios = []
    for i, entry in enumerate(entries):
        where = f"scenarios[{i}]"
        if not isinstance(entry, dict):
            raise ScenarioFileError(where, "expected an object")
        unknown = set(entry) - _KEYS
        if unknown:
            raise ScenarioFileError(where, f"unknown fields {sorted(unknown)}")
        for key in ("weight", "breakpoints", "values"):
            if key not in entry:
                raise ScenarioFileError(where, f'missing field "{key}"')
        weight = _number(entry["weight"], f"{where}.weight")
        if weight < 0:
            raise ScenarioFileError(f"{where}.weight", "weight must be nonnegative")
        density = _number(entry.get("density", 1.0), f"{where}.density")
        rate = _number(entry.get("rate", 1.0), f"{where}.rate")
        horizon = _number(entry.get("horizon", "inf"), f"{where}.horizon", allow_inf=True)
        bp = _numbers(entry["breakpoints"], f"{where}.breakpoints")
        vals = _numbers(entry["values"], f"{where}.values")
        if len(bp) != len(vals):
            raise ScenarioFileError(where, "breakpoints and values differ in length")
        scenarios.append(Scenario(weight, density, horizon, rate, StepProcess(bp, vals)))
    sset = ScenarioSet(scenarios)
    if validate_set:
        problems = validate(sset)
        if problems:
            raise InvalidScenarioError(problems)
    return sset


def load_scenarios(path, validate_set: bool = True) -> ScenarioSet:
    return parse_scenarios(Path(path).read_text(encoding="utf-8"), validate_set)


def _out(x: float):
    return "inf" if x == INF else float(x)


def scenarios_to_dict(sset: ScenarioSet) -> dict:
    out = []
    for s in sset:
        out.append({
            "weight": float(s.weight),
            "density": float(s.density),
            "horizon": _out(s.horizon),
            "rate": float(s.rate),
            "breakpoints": [float(b) for b in s.process.breakpoints],
            "values": [float(v) for v in s.process.values],
        })
    return {"scenarios": out}


def serialize_scenarios(sset: ScenarioSet) -> str:
    return json.dumps(scenarios_to_dict(sset), indent=1) + "\n"


def save_scenarios(sset: ScenarioSet, path) -> None:
    Path(path).write_text(serialize_scenarios(sset), encoding="utf-8")


def digest(path) -> str:
    """SHA-256 of a file's bytes, hex encoded."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def jsonable(x):
    """Recursively convert numpy scalars/arrays and infinities to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return jsonable(x.tolist())
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def dump_report(report: dict, path) -> None:
    text = json.dumps(jsonable(report), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
