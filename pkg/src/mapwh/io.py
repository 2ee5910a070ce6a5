"""JSON (de)serialisation of specs with schema validation."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .map_core import LevyComponent, MapSpec, MapSubordinatorSpec, SplitMeasure
from .measures import ExpPolyFn, ExpPolyMeasure

SCHEMA_TAG = "mapwh/1"

_TERM = {
    "type": "object",
    "required": ["w", "p", "beta"],
    "properties": {
        "w": {"type": "number"},
        "p": {"type": "integer", "minimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
    },
}
_TERMS = {"type": "array", "items": _TERM}
_MEASURE = {
    "type": "object",
    "required": ["terms"],
    "properties": {
        "atom0": {"type": "number", "minimum": 0},
        "terms": _TERMS,
        "side": {"enum": ["pos", "neg"]},
    },
}
_SPLIT = {
    "type": "object",
    "properties": {
        "atom0": {"type": "number", "minimum": 0},
        "pos": {"type": "object", "required": ["terms"], "properties": {"terms": _TERMS}},
        "neg": {"type": "object", "required": ["terms"], "properties": {"terms": _TERMS}},
    },
}
_VEC = {"type": "array", "items": {"type": "number"}}
_MAT = {"type": "array", "items": _VEC}

SPEC_SCHEMA = {
    "type": "object",
    "required": ["schema", "kind", "n", "Q", "components", "trans"],
    "properties": {
        "schema": {"const": SCHEMA_TAG},
        "kind": {"enum": ["map", "subordinator"]},
        "n": {"type": "integer", "minimum": 1, "maximum": 64},
        "pi": {"anyOf": [_VEC, {"type": "null"}]},
        "Q": _MAT,
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "map"}}},
            "then": {"properties": {
                "components": {"type": "array", "items": {
                    "type": "object",
                    "required": ["kill", "center", "gauss", "jumps_pos", "jumps_neg"],
                    "properties": {"kill": {"type": "number"}, "center": {"type": "number"},
                                   "gauss": {"type": "number", "minimum": 0},
                                   "jumps_pos": _MEASURE, "jumps_neg": _MEASURE}}},
                "trans": {"type": "array", "items": {"type": "array", "items": _SPLIT}}}},
        },
        {
            "if": {"properties": {"kind": {"const": "subordinator"}}},
            "then": {"properties": {
                "components": {"type": "array", "items": {
                    "type": "object",
                    "required": ["kill", "drift", "jumps_pos"],
                    "properties": {"kill": {"type": "number"},
                                   "drift": {"type": "number", "minimum": 0},
                                   "jumps_pos": _MEASURE}}},
                "trans": {"type": "array", "items": {"type": "array", "items": _MEASURE}}}},
        },
    ],
}


class SchemaError(ValueError):
    """Malformed input; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def format_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def plain(obj):
    """Recursively convert numpy scalars/arrays into JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def validate_json(obj) -> None:
    validator = jsonschema.Draft202012Validator(SPEC_SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        # deepest error is usually the most specific one
        err = max(errors, key=lambda e: len(e.absolute_path))
        raise SchemaError(format_path(err.absolute_path), err.message)
    n = obj["n"]
    if len(obj["Q"]) != n or any(len(r) != n for r in obj["Q"]):
        raise SchemaError("Q", f"expected {n}x{n} matrix")
    if len(obj["components"]) != n:
        raise SchemaError("components", f"expected {n} entries")
    if len(obj["trans"]) != n or any(len(r) != n for r in obj["trans"]):
        raise SchemaError("trans", f"expected {n}x{n} entries")


def _terms(fn: ExpPolyFn) -> list:
    return [{"w": float(w), "p": int(p), "beta": float(b)} for w, p, b in fn.terms]


def spec_to_json(spec) -> dict:
    n = spec.n
    out = {"schema": SCHEMA_TAG, "n": n,
           "pi": None if spec.pi is None else spec.pi.tolist(),
           "Q": spec.Q.tolist()}
    if isinstance(spec, MapSubordinatorSpec):
        out["kind"] = "subordinator"
        out["components"] = [{"kill": float(spec.kill[i]), "drift": float(spec.drift[i]),
                              "jumps_pos": plain(spec.levy[i].to_json())} for i in range(n)]
        out["trans"] = [[plain(spec.trans[i][j].to_json()) for j in range(n)] for i in range(n)]
    else:
        out["kind"] = "map"
        out["components"] = [{"kill": float(c.kill), "center": float(c.center), "gauss": float(c.gauss),
                              "jumps_pos": plain(c.jumps_pos.to_json()),
                              "jumps_neg": plain(c.jumps_neg.to_json())} for c in spec.comps]
        out["trans"] = [[plain(spec.trans[i][j].to_json()) for j in range(n)] for i in range(n)]
    return out


def _measure(obj, side) -> ExpPolyMeasure:
    terms = [(t["w"], int(t["p"]), t["beta"]) for t in obj.get("terms", [])]
    return ExpPolyMeasure.from_terms(terms, obj.get("atom0", 0.0), obj.get("side", side))


def _split(obj) -> SplitMeasure:
    def fn(key):
        return ExpPolyFn([(t["w"], int(t["p"]), t["beta"]) for t in obj.get(key, {}).get("terms", [])])
    return SplitMeasure(obj.get("atom0", 0.0), fn("pos"), fn("neg"))


def spec_from_json(obj):
    """Build a spec from parsed JSON. Raises SchemaError on structural problems
    and ValueError when the content violates a model invariant."""
    validate_json(obj)
    n, pi, Q = obj["n"], obj.get("pi"), obj["Q"]
    comps = obj["components"]
    if obj["kind"] == "subordinator":
        return MapSubordinatorSpec(
            Q, [c["drift"] for c in comps],
            [_measure(c["jumps_pos"], "pos") for c in comps],
            [[_measure(obj["trans"][i][j], "pos") for j in range(n)] for i in range(n)],
            [c["kill"] for c in comps], pi)
    levy = [LevyComponent(c["kill"], c["center"], c["gauss"],
                          _measure(c["jumps_pos"], "pos"), _measure(c["jumps_neg"], "neg"))
            for c in comps]
    return MapSpec(Q, levy, [[_split(obj["trans"][i][j]) for j in range(n)] for i in range(n)], pi)


def dumps(obj) -> str:
    # repr of a Python float is the shortest round-trip string
    return json.dumps(plain(obj), indent=2)


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError("", f"invalid JSON: {e}") from None


def load_spec(path):
    return spec_from_json(load_json(path))


def save_spec(spec, path) -> None:
    Path(path).write_text(dumps(spec_to_json(spec)) + "\n")
