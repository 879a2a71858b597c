"""JSON reading and writing of explicit finite MDPs.

Document layout::

    {
      "states": ["s0", "goal", "bad"],
      "initial": "s0",
      "goal": "goal",
      "transitions": [
        {"from": "s0", "action": "alpha", "to": [["s0", "1"]]},
        {"from": "s0", "action": "beta", "to": [["goal", "1/2"], ["bad", "1/2"]]}
      ]
    }

An optional ``"bad"`` list names losing sinks (informational only).
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from pathlib import Path

from .core import FiniteMdp, Prob, validate_distribution
from .errors import ParseError, ProbabilityError, SchemaError

_TOP_KEYS = {"states", "initial", "goal", "transitions", "bad"}
_REQUIRED = {"states", "initial", "goal"}
_ROW_KEYS = {"from", "action", "to"}
_RATIONAL = re.compile(r"^\s*\d+\s*(/\s*\d+\s*)?$")


def parse_probability(value, exact: bool = True) -> Prob:
    """Parse ``"n/d"``, an integer, or (float mode only) a decimal."""
    if isinstance(value, bool):
        raise SchemaError(f"probability must be a number or string, got {value!r}")
    if isinstance(value, int):
        return Fraction(value) if exact else float(value)
    if isinstance(value, float):
        if exact:
            raise SchemaError(f"decimal probability {value!r} is not allowed in exact mode")
        return value
    if not isinstance(value, str):
        raise SchemaError(f"probability must be a number or string, got {value!r}")
    if _RATIONAL.match(value):
        try:
            frac = Fraction(value.replace(" ", ""))
        except ZeroDivisionError:
            raise ProbabilityError(f"zero denominator in {value!r}") from None
        return frac if exact else float(frac)
    if exact:
        raise SchemaError(f"decimal probability {value!r} is not allowed in exact mode")
    try:
        return float(value)
    except ValueError:
        raise SchemaError(f"unparseable probability {value!r}") from None


def _require_str(value, what: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{what} must be a string, got {value!r}")
    return value


def finite_model_from_dict(doc: dict, exact: bool = True) -> FiniteMdp:
    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"unknown keys: {sorted(unknown)}")
    missing = _REQUIRED - set(doc)
    if missing:
        raise SchemaError(f"missing keys: {sorted(missing)}")
    states = doc["states"]
    if not isinstance(states, list) or not states:
        raise SchemaError("'states' must be a non-empty list")
    states = [_require_str(s, "state name") for s in states]
    if len(set(states)) != len(states):
        raise SchemaError("duplicate state names")
    declared = set(states)

    def known(name, what):
        name = _require_str(name, what)
        if name not in declared:
            raise SchemaError(f"{what} {name!r} is not a declared state")
        return name

    initial = known(doc["initial"], "initial")
    goal = known(doc["goal"], "goal")
    bad = [known(b, "bad") for b in doc.get("bad", [])]

    transitions: dict[str, dict[str, list]] = {}
    rows = doc.get("transitions", [])
    if not isinstance(rows, list):
        raise SchemaError("'transitions' must be a list")
    for row in rows:
        if not isinstance(row, dict):
            raise SchemaError("each transition must be an object")
        if set(row) != _ROW_KEYS:
            raise SchemaError(f"transition keys must be {sorted(_ROW_KEYS)}, got {sorted(row)}")
        src = known(row["from"], "'from'")
        act = _require_str(row["action"], "action")
        if src == goal:
            raise SchemaError("the goal state must be absorbing")
        if act in transitions.get(src, {}):
            raise SchemaError(f"duplicate action {act!r} at {src!r}")
        if not isinstance(row["to"], list) or not row["to"]:
            raise SchemaError(f"'to' of ({src}, {act}) must be a non-empty list")
        dist = []
        for pair in row["to"]:
            if not isinstance(pair, list) or len(pair) != 2:
                raise SchemaError(f"successor entries must be [state, probability], got {pair!r}")
            dist.append((known(pair[0], "successor"), parse_probability(pair[1], exact)))
        if not validate_distribution(dist):
            raise ProbabilityError(f"row ({src}, {act}) is not a probability distribution: {dist}")
        transitions.setdefault(src, {})[act] = dist
    return FiniteMdp(states, transitions, initial, goal, bad=bad)


def load_finite_model(text: str, exact: bool = True) -> FiniteMdp:
    """Parse and validate a JSON document into a :class:`FiniteMdp`."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    return finite_model_from_dict(doc, exact=exact)


def read_finite_model(path: str | Path, exact: bool = True) -> FiniteMdp:
    return load_finite_model(Path(path).read_text(encoding="utf-8"), exact=exact)


def _fmt(p: Prob) -> str:
    if isinstance(p, Fraction):
        return str(p)
    return repr(float(p))


def finite_model_to_dict(m: FiniteMdp) -> dict:
    doc = {
        "states": [m.name_of(k) for k in m.states],
        "initial": m.name_of(m.initial_key),
        "goal": m.name_of(m.goal_key),
        "transitions": [
            {
                "from": m.name_of(src),
                "action": act,
                "to": [[m.name_of(dst), _fmt(p)] for dst, p in row],
            }
            for src in m.states
            for act, row in m.transitions.get(src, {}).items()
        ],
    }
    if m.bad:
        doc["bad"] = [m.name_of(k) for k in m.states if k in m.bad]
    return doc


def serialize_finite_model(m: FiniteMdp) -> str:
    return json.dumps(finite_model_to_dict(m), indent=2)
