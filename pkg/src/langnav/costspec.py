"""Cost terms, parameter sets and composed cost specifications.

A CostSpec is the unit the assistant pipeline produces and the solver
consumes: named terms (builtin identifiers or DSL expressions), one
non-negative weight per term, and a parameter set.  The input-penalty and
velocity-tracking terms are mandatory in every composed spec.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import dsl
from .dsl import CostExpr, parse_expr, pretty

__all__ = [
    "BUILTIN_TERMS",
    "MANDATORY_TERMS",
    "NO_HUMAN_SENTINEL",
    "ParamValue",
    "ParameterSet",
    "CostTerm",
    "CostSpec",
    "ValidationError",
    "builtin",
    "compose_cost",
    "closest_human_binding",
    "spec_to_dict",
    "spec_from_dict",
    "default_path_spec",
]

#: Canonical builtin term sources, keyed by identifier.
_BUILTIN_SOURCES = {
    "contour": "e_c^2",
    "lag": "e_l^2",
    "accel": "a^2",
    "omega": "omega^2",
    "velocity": "(v - v_ref)^2",
    "goal": "(goal_x - px)^2 + (goal_y - py)^2",
}

BUILTIN_TERMS = frozenset(_BUILTIN_SOURCES)
MANDATORY_TERMS = ("accel", "omega", "velocity")

#: Stand-in closest-human position when no humans exist; far enough that
#: inverse-distance and guarded terms evaluate to ~0 with ~0 gradient.
NO_HUMAN_SENTINEL = (1e6, 1e6)

#: Parameters whose values come from the environment each solve rather than
#: from user tuning.
ENVIRONMENTAL_PARAMS = {"goal_x": "m", "goal_y": "m"}


class ValidationError(ValueError):
    """Raised when a cost specification violates its contract."""


def builtin(identifier: str) -> CostExpr:
    """Canonical AST of a builtin term; raises ValidationError if unknown."""
    try:
        return parse_expr(_BUILTIN_SOURCES[identifier])
    except KeyError:
        raise ValidationError(
            f"unknown builtin {identifier!r}; expected one of {sorted(BUILTIN_TERMS)}"
        ) from None


@dataclass(frozen=True)
class ParamValue:
    value: float
    unit: str = ""
    tunable: bool = True


class ParameterSet:
    """Named scalar parameters with units and a tunability flag."""

    def __init__(self, entries: dict[str, ParamValue] | None = None) -> None:
        self._entries: dict[str, ParamValue] = dict(entries or {})
        for name, pv in self._entries.items():
            if not math.isfinite(pv.value):
                raise ValidationError(f"parameter {name!r} is not finite")

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __getitem__(self, name: str) -> ParamValue:
        return self._entries[name]

    def names(self) -> set[str]:
        return set(self._entries)

    def values(self) -> dict[str, float]:
        return {k: pv.value for k, pv in self._entries.items()}

    def tunable_names(self) -> set[str]:
        return {k for k, pv in self._entries.items() if pv.tunable}

    def with_value(self, name: str, value: float) -> "ParameterSet":
        if not math.isfinite(value):
            raise ValidationError(f"parameter {name!r} update is not finite")
        entries = dict(self._entries)
        old = entries.get(name, ParamValue(value))
        entries[name] = ParamValue(value, old.unit, old.tunable)
        return ParameterSet(entries)

    def merged(self, other: "ParameterSet") -> "ParameterSet":
        entries = dict(self._entries)
        entries.update(other._entries)
        return ParameterSet(entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, ParameterSet) and self._entries == other._entries

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={pv.value:g}" for k, pv in sorted(self._entries.items()))
        return f"ParameterSet({inner})"


@dataclass(frozen=True)
class CostTerm:
    """One named stage-cost term: a builtin identifier or a DSL expression."""

    name: str
    expr: CostExpr
    kind: str = "expr"  # "builtin" or "expr"
    source: str = ""

    @classmethod
    def from_builtin(cls, name: str, identifier: str | None = None) -> "CostTerm":
        ident = identifier or name
        return cls(name=name, expr=builtin(ident), kind="builtin", source=ident)

    @classmethod
    def from_source(cls, name: str, source: str) -> "CostTerm":
        return cls(name=name, expr=parse_expr(source), kind="expr", source=source)


@dataclass(frozen=True)
class CostSpec:
    terms: tuple[CostTerm, ...]
    weights: dict[str, float]
    params: ParameterSet
    provenance: str = ""

    def term(self, name: str) -> CostTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def term_names(self) -> list[str]:
        return [t.name for t in self.terms]

    def with_weights(self, weights: dict[str, float]) -> "CostSpec":
        return compose_cost(self.terms, weights, self.params, self.provenance)

    def with_params(self, params: ParameterSet) -> "CostSpec":
        return compose_cost(self.terms, self.weights, params, self.provenance)

    def digest(self) -> str:
        payload = json.dumps(spec_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]

    def pretty_source(self) -> str:
        lines = []
        for t in self.terms:
            w = self.weights[t.name]
            lines.append(f"{t.name}: weight={w:.4g}  J_{t.name} = {pretty(t.expr)}")
        return "\n".join(lines)


def compose_cost(
    terms,
    weights: dict[str, float],
    params: ParameterSet,
    provenance: str = "",
) -> CostSpec:
    """Validate and assemble a CostSpec; the stage cost is sum_a w_a * J_a.

    Mandatory accel/omega/velocity terms are injected with unit weight when
    missing.  Raises ValidationError for duplicate names, negative or
    non-finite weights, missing referenced parameters, and unguarded
    divisions.
    """
    terms = list(terms)
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate term names: {dupes}")

    weights = dict(weights)
    for missing in MANDATORY_TERMS:
        if missing not in names:
            terms.append(CostTerm.from_builtin(missing))
            names.append(missing)
            weights.setdefault(missing, 1.0)

    extra = set(weights) - set(names)
    if extra:
        raise ValidationError(f"weights for unknown terms: {sorted(extra)}")
    for n in names:
        weights.setdefault(n, 1.0)
        w = weights[n]
        if not math.isfinite(w) or w < 0.0:
            raise ValidationError(f"weight for {n!r} must be finite and >= 0, got {w}")

    if "v_ref" not in params:  # the mandatory velocity term references it
        params = params.merged(ParameterSet({"v_ref": ParamValue(1.5, "m/s")}))

    referenced: set[str] = set()
    for t in terms:
        referenced |= dsl.param_names(t.expr)
        if not dsl.division_guarded(t.expr):
            raise ValidationError(
                f"term {t.name!r} has an unguarded division; add an epsilon"
            )
    env_defaults = {"goal_x": 0.0, "goal_y": 0.0}
    for name in sorted(referenced):
        if name in params:
            continue
        if name in ENVIRONMENTAL_PARAMS:
            params = params.merged(
                ParameterSet({name: ParamValue(env_defaults[name],
                                               ENVIRONMENTAL_PARAMS[name],
                                               tunable=False)})
            )
        else:
            raise ValidationError(f"parameter {name!r} referenced but not declared")

    return CostSpec(tuple(terms), weights, params, provenance)


def closest_human_binding(robot_position, human_positions) -> tuple[float, float]:
    """Position of the human nearest the robot; ties go to the lowest index.

    `human_positions` is an (H, 2) array ordered by human id.  With no
    humans, returns the far sentinel so human terms stay total.
    """
    pts = np.asarray(human_positions, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        return NO_HUMAN_SENTINEL
    p = np.asarray(robot_position, dtype=float)
    d2 = np.sum((pts - p[None, :]) ** 2, axis=1)
    best = int(np.argmin(d2))  # first minimum = lowest id
    return float(pts[best, 0]), float(pts[best, 1])


def spec_to_dict(spec: CostSpec) -> dict:
    return {
        "terms": [
            {"name": t.name, "kind": t.kind,
             "source": t.source if t.kind == "builtin" else pretty(t.expr)}
            for t in spec.terms
        ],
        "weights": {k: float(v) for k, v in spec.weights.items()},
        "params": {
            name: {
                "value": spec.params[name].value,
                "unit": spec.params[name].unit,
                "tunable": spec.params[name].tunable,
            }
            for name in sorted(spec.params.names())
        },
        "provenance": spec.provenance,
    }


def spec_from_dict(doc: dict) -> CostSpec:
    terms = []
    for t in doc["terms"]:
        if t["kind"] == "builtin":
            terms.append(CostTerm.from_builtin(t["name"], t["source"]))
        else:
            terms.append(CostTerm.from_source(t["name"], t["source"]))
    params = ParameterSet(
        {
            name: ParamValue(p["value"], p.get("unit", ""), p.get("tunable", True))
            for name, p in doc.get("params", {}).items()
        }
    )
    return compose_cost(terms, doc.get("weights", {}), params,
                        doc.get("provenance", ""))


def default_path_spec(v_ref: float = 1.5) -> CostSpec:
    """Path-tracking spec: contour/lag plus the mandatory terms, unit weights."""
    terms = [
        CostTerm.from_builtin("contour"),
        CostTerm.from_builtin("lag"),
        CostTerm.from_builtin("velocity"),
        CostTerm.from_builtin("accel"),
        CostTerm.from_builtin("omega"),
    ]
    params = ParameterSet({"v_ref": ParamValue(v_ref, "m/s")})
    return compose_cost(terms, {}, params, provenance="default")
