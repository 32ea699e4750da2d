"""Built-in evaluation corpus and benchmark variants.

The assistant corpus pairs prompts with declarative expectations (a routing
decision, generated-spec shape checks, or rating/parameter directions); the
corridor benchmark defines the six instruction variants whose navigation
metrics the batch runner aggregates.  Custom corpora load from JSON files
with the same schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .assistants.pipeline import (
    AssistantPipeline,
    ImportanceRatings,
    initial_ratings,
)
from .costspec import (
    CostSpec,
    CostTerm,
    ParameterSet,
    ParamValue,
    compose_cost,
    default_path_spec,
)
from .dsl import Call, Div

__all__ = [
    "CorpusEntry",
    "builtin_corpus",
    "load_corpus",
    "reference_spec",
    "evaluate_corpus",
    "EvalRow",
    "eval_rows_to_text",
    "eval_rows_to_csv",
    "corridor_variants",
]


SAFE_DISTANCE_SOURCE = (
    "if_else((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2, 0, "
    "((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2)^2)"
)


def reference_spec(kind: str) -> CostSpec:
    """Named starting specs the corpus evaluates against."""
    if kind == "path":
        return default_path_spec()
    if kind == "goal":
        return compose_cost([CostTerm.from_builtin("goal")], {},
                            ParameterSet(), "reach the goal")
    if kind == "hf":
        term = CostTerm.from_source("follow_human",
                                    "(oh_x - px)^2 + (oh_y - py)^2")
        return compose_cost([term], {}, ParameterSet(),
                            "follow the closest human")
    if kind == "sd":
        term = CostTerm.from_source("safe_distance", SAFE_DISTANCE_SOURCE)
        return compose_cost(
            [CostTerm.from_builtin("goal"), term], {},
            ParameterSet({"d_safe": ParamValue(1.0, "m")}),
            "go to the goal while keeping a safe distance from humans")
    raise ValueError(f"unknown reference spec kind {kind!r}")


@dataclass(frozen=True)
class CorpusEntry:
    code: str
    kind: str  # capability | generation | weights
    prompt: str
    spec: str = "path"  # reference spec the exchange starts from
    expected_route: str = ""  # capability entries
    expect_terms: tuple[str, ...] = ()  # generation: required term names
    expect_inverse_term: str = ""  # generation: term that must be a division
    expect_conditional_term: str = ""  # generation: term that must branch
    expect_tunable_params: tuple[str, ...] = ()  # generation
    expect_rating_up: tuple[str, ...] = ()  # weights: z must increase
    expect_rating_down: tuple[str, ...] = ()
    expect_param_up: tuple[str, ...] = ()  # weights: value must increase
    expect_param_down: tuple[str, ...] = ()


def builtin_corpus() -> list[CorpusEntry]:
    entries: list[CorpusEntry] = []
    capability = [
        ("C1", "Go to the goal. You are navigating through a hospital.",
         {"path": "generate_new_cost", "goal": "update_parameters",
          "hf": "generate_new_cost"}),
        ("C2", "Stick to the path.",
         {"path": "update_parameters", "goal": "generate_new_cost",
          "hf": "generate_new_cost"}),
        ("C3", "Follow the closest human.",
         {"path": "generate_new_cost", "goal": "generate_new_cost",
          "hf": "update_parameters"}),
        ("C4", "Go to the goal while keeping a safe distance from humans.",
         {"path": "generate_new_cost", "goal": "generate_new_cost",
          "hf": "generate_new_cost"}),
        ("C5", "Adapt to the environment.",
         {"path": "adapt_to_environment", "goal": "adapt_to_environment",
          "hf": "adapt_to_environment"}),
    ]
    for code, prompt, routes in capability:
        for spec_kind, route in routes.items():
            entries.append(CorpusEntry(
                code=code, kind="capability", prompt=prompt, spec=spec_kind,
                expected_route=route))

    entries += [
        CorpusEntry("G1", "generation", "Follow the path.", spec="goal",
                    expect_terms=("contour", "lag", "velocity", "accel",
                                  "omega")),
        CorpusEntry("G2", "generation", "Reach the goal.",
                    expect_terms=("goal", "velocity", "accel", "omega")),
        CorpusEntry("G3", "generation",
                    "Maximize the distance to the closest human.",
                    expect_terms=("velocity", "accel", "omega"),
                    expect_inverse_term="avoid_human"),
        CorpusEntry("G4", "generation",
                    "Minimize the distance to the closest human.",
                    expect_terms=("follow_human", "velocity", "accel",
                                  "omega")),
        CorpusEntry("G5", "generation",
                    "Go to the goal while keeping a safe distance from "
                    "humans.",
                    expect_terms=("goal", "velocity", "accel", "omega"),
                    expect_conditional_term="safe_distance",
                    expect_tunable_params=("d_safe",)),
        CorpusEntry("G6", "generation", "Follow the closest human.",
                    expect_terms=("follow_human", "velocity", "accel",
                                  "omega")),
    ]

    entries += [
        CorpusEntry("W1", "weights", "Be faster.",
                    expect_rating_up=("velocity",),
                    expect_param_up=("v_ref",)),
        CorpusEntry("W2", "weights", "Take more distance to humans.",
                    spec="sd", expect_param_up=("d_safe",),
                    expect_rating_up=("safe_distance",)),
        CorpusEntry("W3", "weights", "Stick to the path.",
                    expect_rating_up=("contour", "lag")),
        CorpusEntry("W4", "weights", "Be smoother.",
                    expect_rating_up=("accel", "omega")),
        CorpusEntry("W5", "weights", "Increase rotation capabilities.",
                    expect_rating_down=("omega",)),
        CorpusEntry("W6", "weights", "You can rotate more.",
                    expect_rating_down=("omega",)),
    ]
    return entries


def load_corpus(path: str | Path) -> list[CorpusEntry]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = []
    for item in doc:
        entries.append(CorpusEntry(
            code=item["code"],
            kind=item["kind"],
            prompt=item["prompt"],
            spec=item.get("spec", "path"),
            expected_route=item.get("expected_route", ""),
            expect_terms=tuple(item.get("expect_terms", [])),
            expect_inverse_term=item.get("expect_inverse_term", ""),
            expect_conditional_term=item.get("expect_conditional_term", ""),
            expect_tunable_params=tuple(item.get("expect_tunable_params",
                                                 [])),
            expect_rating_up=tuple(item.get("expect_rating_up", [])),
            expect_rating_down=tuple(item.get("expect_rating_down", [])),
            expect_param_up=tuple(item.get("expect_param_up", [])),
            expect_param_down=tuple(item.get("expect_param_down", [])),
        ))
    return entries


def _check_generation(entry: CorpusEntry, spec: CostSpec) -> bool:
    names = set(spec.term_names())
    if not set(entry.expect_terms) <= names:
        return False
    if entry.expect_inverse_term:
        if entry.expect_inverse_term not in names:
            return False
        if not isinstance(spec.term(entry.expect_inverse_term).expr, Div):
            return False
    if entry.expect_conditional_term:
        if entry.expect_conditional_term not in names:
            return False
        body = spec.term(entry.expect_conditional_term).expr
        if not (isinstance(body, Call) and body.func == "if_else"):
            return False
    for name in entry.expect_tunable_params:
        if name not in spec.params or not spec.params[name].tunable:
            return False
    return True


def _check_weights(entry: CorpusEntry, spec: CostSpec,
                   old: ImportanceRatings, new: ImportanceRatings,
                   old_params: ParameterSet, new_params: ParameterSet) -> bool:
    for name in entry.expect_rating_up:
        if new.get(name, 0) <= old.get(name, 5):
            return False
    for name in entry.expect_rating_down:
        if new.get(name, 10) >= old.get(name, 5):
            return False
    for name in entry.expect_param_up:
        if name not in new_params or \
                new_params[name].value <= old_params[name].value:
            return False
    for name in entry.expect_param_down:
        if name not in new_params or \
                new_params[name].value >= old_params[name].value:
            return False
    return True


@dataclass(frozen=True)
class EvalRow:
    code: str
    kind: str
    repetitions: int
    success_rate: float
    spec: str = "path"

    @property
    def label(self) -> str:
        return (f"{self.code} (on {self.spec})"
                if self.kind == "capability" else self.code)


def evaluate_corpus(entries: list[CorpusEntry], client_factory,
                    repetitions: int = 10) -> list[EvalRow]:
    """Success rate of each corpus entry over repeated fresh exchanges."""
    rows = []
    for entry in entries:
        successes = 0
        for _ in range(repetitions):
            pipeline = AssistantPipeline(client_factory())
            spec = reference_spec(entry.spec)
            try:
                if entry.kind == "capability":
                    decision = pipeline.route(entry.prompt, spec)
                    ok = decision.kind.value == entry.expected_route
                elif entry.kind == "generation":
                    generated = pipeline.generate_cost(entry.prompt, spec)
                    ok = _check_generation(entry, generated)
                elif entry.kind == "weights":
                    old = initial_ratings(spec)
                    z, params, _ = pipeline.retrieve_weights(
                        entry.prompt, spec, old)
                    ok = _check_weights(entry, spec, old, z,
                                        spec.params, params)
                else:
                    raise ValueError(f"unknown corpus kind {entry.kind!r}")
            except Exception:
                ok = False
            successes += ok
        rows.append(EvalRow(entry.code, entry.kind, repetitions,
                            successes / repetitions, entry.spec))
    return rows


def eval_rows_to_text(rows: list[EvalRow]) -> str:
    lines = [f"{'case':<18}{'kind':<14}{'reps':>6}{'success':>10}",
             "-" * 48]
    for r in rows:
        lines.append(f"{r.label:<18}{r.kind:<14}{r.repetitions:>6}"
                     f"{r.success_rate:>10.2f}")
    return "\n".join(lines)


def eval_rows_to_csv(rows: list[EvalRow]) -> str:
    out = ["case,kind,repetitions,success_rate"]
    for r in rows:
        out.append(f"{r.label},{r.kind},{r.repetitions},"
                   f"{r.success_rate:.3f}")
    return "\n".join(out) + "\n"


_BASE_TASK = "Follow the reference path."


def corridor_variants() -> list[tuple[str, list[tuple[float, str]]]]:
    """The six corridor instruction variants of the navigation benchmark."""
    return [
        ("default", []),
        ("drive_quickly", [(0.0, f"{_BASE_TASK} Drive quickly.")]),
        ("drive_carefully", [(0.0, f"{_BASE_TASK} Drive carefully.")]),
        ("factory_no_humans",
         [(0.0, f"{_BASE_TASK} You are navigating through a factory "
                "without humans.")]),
        ("hospital",
         [(0.0, f"{_BASE_TASK} You are navigating through a hospital.")]),
        ("keep_distance_1_5m",
         [(0.0, f"{_BASE_TASK} Try to keep a distance of at least 1.5m "
                "from pedestrians.")]),
    ]
