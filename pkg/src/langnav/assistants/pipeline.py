"""The four-assistant pipeline.

A query is routed (capability), optionally turned into a new cost function
(cost generation) or into motion guidance from a scene description
(camera), and finally converted into importance ratings and parameter
values (weight retrieval).  Ratings become weights through w = z / mean(z).
A query either produces a fully validated new spec applied atomically or
leaves the active spec untouched.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources

from ..costspec import (
    CostSpec,
    CostTerm,
    ParameterSet,
    ParamValue,
    ValidationError,
    compose_cost,
)
from ..dsl import ParseError
from ..mpc import CostRejected
from .clients import LlmClient, TransportError

__all__ = [
    "Query",
    "RouteKind",
    "RouteDecision",
    "ImportanceRatings",
    "PipelineEvent",
    "PipelineError",
    "AllZeroRatings",
    "ratings_to_weights",
    "AssistantPipeline",
    "initial_ratings",
]


@dataclass(frozen=True)
class Query:
    text: str
    received_at: float = 0.0
    index: int = 0

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


class RouteKind(Enum):
    GENERATE_NEW_COST = "generate_new_cost"
    ADAPT_TO_ENVIRONMENT = "adapt_to_environment"
    UPDATE_PARAMETERS = "update_parameters"


@dataclass(frozen=True)
class RouteDecision:
    kind: RouteKind
    rationale: str = ""


ImportanceRatings = dict[str, int]  # term name -> z in [0, 10]


@dataclass(frozen=True)
class PipelineEvent:
    stage: str  # Capability | CostGen | Camera | WeightRet | Applied | Rejected
    detail: str
    elapsed: float = 0.0


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str) -> None:
        super().__init__(message)
        self.stage = stage


class AllZeroRatings(ValueError):
    """Every importance rating is zero; weights would be undefined."""


class ResponseFormatError(ValueError):
    """The assistant's reply did not follow the line schema."""


def initial_ratings(spec: CostSpec) -> ImportanceRatings:
    """Fresh ratings for a newly generated spec: everything starts at 5."""
    return {name: 5 for name in spec.term_names()}


def ratings_to_weights(z: ImportanceRatings) -> dict[str, float]:
    """w_a = z_a / mean(z); the mean of the outputs is 1 by construction.

    Computed as (z_a * n) / sum(z) so both operands stay integral: the
    single correctly-rounded division makes the rule exactly invariant to
    scaling every rating by a common factor.
    """
    if not z:
        raise AllZeroRatings("no ratings given")
    total = sum(z.values())
    if total == 0:
        raise AllZeroRatings("all importance ratings are zero")
    n = len(z)
    return {name: (value * n) / total for name, value in z.items()}


# ---------------------------------------------------------------------------
# Response parsing


def _parse_decision(text: str) -> RouteDecision:
    kind = None
    reason = ""
    for line in text.splitlines():
        line = line.strip()
        if line.upper().startswith("DECISION:"):
            token = line.split(":", 1)[1].strip().lower().replace(" ", "_")
            for candidate in RouteKind:
                if candidate.value == token:
                    kind = candidate
        elif line.upper().startswith("REASON:"):
            reason = line.split(":", 1)[1].strip()
    if kind is None:
        raise ResponseFormatError(f"no valid DECISION line in {text!r}")
    return RouteDecision(kind, reason)


def _parse_term_manifest(text: str):
    terms: list[tuple[str, str, str]] = []
    params: list[tuple[str, float, bool, str]] = []
    for line in text.splitlines():
        line = line.strip()
        if line.upper().startswith("TERM:"):
            body = line.split(":", 1)[1].strip()
            if "=" not in body:
                raise ResponseFormatError(f"malformed TERM line {line!r}")
            name, rhs = (part.strip() for part in body.split("=", 1))
            if rhs.startswith("builtin:"):
                terms.append((name, "builtin", rhs[len("builtin:"):].strip()))
            elif rhs.startswith("expr:"):
                terms.append((name, "expr", rhs[len("expr:"):].strip()))
            else:
                raise ResponseFormatError(f"TERM must be builtin: or expr: {line!r}")
        elif line.upper().startswith("PARAM:"):
            body = line.split(":", 1)[1].strip()
            if "=" not in body:
                raise ResponseFormatError(f"malformed PARAM line {line!r}")
            name, rhs = (part.strip() for part in body.split("=", 1))
            fields = rhs.split()
            if not fields:
                raise ResponseFormatError(f"PARAM missing value: {line!r}")
            try:
                value = float(fields[0])
            except ValueError:
                raise ResponseFormatError(f"PARAM value not numeric: {line!r}")
            tunable = "fixed" not in fields[1:]
            unit = fields[-1] if len(fields) >= 3 else ""
            params.append((name, value, tunable, unit))
    if not terms:
        raise ResponseFormatError(f"no TERM lines in {text!r}")
    return terms, params


def _parse_ratings(text: str):
    ratings: dict[str, int] = {}
    params: dict[str, float] = {}
    for line in text.splitlines():
        line = line.strip()
        if line.upper().startswith("RATING"):
            body = line[len("RATING"):].strip()
            if "=" not in body:
                continue
            name, value = (part.strip() for part in body.split("=", 1))
            try:
                ratings[name] = int(round(float(value)))
            except ValueError:
                continue
        elif line.upper().startswith("PARAM"):
            body = line[len("PARAM"):].strip()
            if "=" not in body:
                continue
            name, value = (part.strip() for part in body.split("=", 1))
            try:
                params[name] = float(value.split()[0])
            except (ValueError, IndexError):
                continue
    if not ratings and not params:
        raise ResponseFormatError(f"no RATING or PARAM lines in {text!r}")
    return ratings, params


# ---------------------------------------------------------------------------
# Pipeline


def _load_prompt(name: str) -> str:
    return resources.files("langnav.assistants").joinpath(
        f"prompts/{name}.txt").read_text(encoding="utf-8")


def _context_block(spec: CostSpec, ratings: ImportanceRatings | None = None) -> str:
    lines = [
        "TERMS: " + ", ".join(spec.term_names()),
        "PARAMS: " + ", ".join(
            f"{name}={spec.params[name].value:g}"
            for name in sorted(spec.params.names())),
    ]
    if ratings is not None:
        lines.append("RATINGS: " + ", ".join(
            f"{name}={ratings.get(name, 5)}" for name in spec.term_names()))
    lines.append("Current cost function:")
    lines.append(spec.pretty_source())
    return "\n".join(lines)


_HISTORY_LIMIT = 12  # keep the last few exchanges as rolling context


class AssistantPipeline:
    """Runs queries through routing, generation/camera and weight retrieval.

    The capability and weight assistants keep a rolling conversation so
    earlier queries stay soft context; cost generation starts fresh on
    every call.
    """

    def __init__(self, client: LlmClient, v_max: float = 2.5) -> None:
        self.client = client
        self.v_max = v_max
        self._prompts = {name: _load_prompt(name)
                         for name in ("capability", "costgen", "camera", "weights")}
        self._capability_history: list[tuple[str, str]] = []
        self._weights_history: list[tuple[str, str]] = []

    def reset(self) -> None:
        self._capability_history.clear()
        self._weights_history.clear()
        self.client.reset()

    @staticmethod
    def _remember(history: list[tuple[str, str]], user: str, reply: str) -> None:
        history.append(("user", user))
        history.append(("assistant", reply))
        del history[:-_HISTORY_LIMIT]

    # -- stages --------------------------------------------------------------

    def route(self, query_text: str, spec: CostSpec) -> RouteDecision:
        """Pick the next assistant; falls back to update_parameters when the
        reply cannot be parsed twice (never regenerates on a parse failure)."""
        message = f"QUERY: {query_text}\n{_context_block(spec)}"
        reply = self.client.send(self._prompts["capability"],
                                 list(self._capability_history), message)
        try:
            decision = _parse_decision(reply)
        except ResponseFormatError:
            reply = self.client.send(
                self._prompts["capability"], list(self._capability_history),
                message + "\nAnswer strictly in the DECISION/REASON format.")
            try:
                decision = _parse_decision(reply)
            except ResponseFormatError:
                decision = RouteDecision(RouteKind.UPDATE_PARAMETERS,
                                         "fallback: unparseable routing reply")
        self._remember(self._capability_history, message, reply)
        return decision

    def generate_cost(self, query_text: str, spec: CostSpec) -> CostSpec:
        """Produce a validated, unit-weight CostSpec for the query.

        One repair round-trip is attempted with the validation error; a
        second failure raises CostRejected.
        """
        message = f"QUERY: {query_text}\n{_context_block(spec)}"
        reply = self.client.send(self._prompts["costgen"], [], message)
        try:
            return self._build_spec(reply, query_text, spec)
        except (ResponseFormatError, ParseError, ValidationError) as first:
            repair = (f"{message}\nYour previous answer failed validation: "
                      f"{first}. Answer again in the required format.")
            reply = self.client.send(self._prompts["costgen"], [], repair)
            try:
                return self._build_spec(reply, query_text, spec)
            except (ResponseFormatError, ParseError, ValidationError) as second:
                raise CostRejected(str(second)) from second

    def _build_spec(self, reply: str, query_text: str,
                    current: CostSpec) -> CostSpec:
        manifest, param_lines = _parse_term_manifest(reply)
        terms = []
        for name, kind, payload in manifest:
            if kind == "builtin":
                terms.append(CostTerm.from_builtin(name, payload))
            else:
                terms.append(CostTerm.from_source(name, payload))
        entries = {}
        if "v_ref" in current.params:
            entries["v_ref"] = current.params["v_ref"]
        for name, value, tunable, unit in param_lines:
            entries[name] = ParamValue(value, unit, tunable)
        params = ParameterSet(entries)
        return compose_cost(terms, {}, params, provenance=query_text)

    def camera_adapt(self, scene_description: str) -> str:
        """Turn a textual scene description into motion guidance bullets.

        The cost function itself stays unchanged; the guidance is handed to
        the weight retrieval stage.
        """
        message = f"SCENE: {scene_description}"
        return self.client.send(self._prompts["camera"], [], message)

    def retrieve_weights(self, instruction: str, spec: CostSpec,
                         ratings: ImportanceRatings):
        """Ask for new ratings and parameter values.

        Returns (ratings, params, warnings): out-of-range ratings are
        clamped, unknown term names dropped with a warning, and v_ref
        clamped into [0, v_max].
        """
        message = (f"INSTRUCTION: {instruction}\n"
                   f"{_context_block(spec, ratings)}")
        reply = self.client.send(self._prompts["weights"],
                                 list(self._weights_history), message)
        try:
            raw_ratings, raw_params = _parse_ratings(reply)
        except ResponseFormatError:
            reply = self.client.send(
                self._prompts["weights"], list(self._weights_history),
                message + "\nAnswer strictly in the RATING/PARAM/REASON format.")
            try:
                raw_ratings, raw_params = _parse_ratings(reply)
            except ResponseFormatError as exc:
                raise PipelineError("WeightRet", str(exc)) from exc
        self._remember(self._weights_history, message, reply)

        warnings: list[str] = []
        known = set(spec.term_names())
        merged: ImportanceRatings = {name: ratings.get(name, 5) for name in known}
        for name, value in raw_ratings.items():
            if name not in known:
                warnings.append(f"ignoring rating for unknown term {name!r}")
                continue
            merged[name] = max(0, min(10, value))

        tunable = spec.params.tunable_names()
        params = spec.params
        for name, value in raw_params.items():
            if name not in tunable:
                warnings.append(f"ignoring update for non-tunable {name!r}")
                continue
            if name == "v_ref":
                value = max(0.0, min(self.v_max, value))
            params = params.with_value(name, value)
        return merged, params, warnings

    # -- full pipeline ---------------------------------------------------------

    def handle_query(self, query: Query, controller, on_event=None
                     ) -> list[PipelineEvent]:
        """Route, optionally regenerate or sense, retune, and atomically swap.

        `controller` must expose .spec, .ratings, .apply(spec, ratings) and
        .scene_description().  On any failure the controller keeps its
        current spec and a Rejected event is emitted.
        """
        events: list[PipelineEvent] = []

        def emit(stage: str, detail: str, t0: float) -> None:
            event = PipelineEvent(stage, detail, time.perf_counter() - t0)
            events.append(event)
            if on_event is not None:
                on_event(event)

        spec: CostSpec = controller.spec
        ratings: ImportanceRatings = dict(controller.ratings)
        try:
            t0 = time.perf_counter()
            decision = self.route(query.text, spec)
            emit("Capability", decision.kind.value, t0)

            instruction = query.text
            if decision.kind is RouteKind.GENERATE_NEW_COST:
                t0 = time.perf_counter()
                spec = self.generate_cost(query.text, spec)
                ratings = initial_ratings(spec)
                emit("CostGen", ", ".join(spec.term_names()), t0)
            elif decision.kind is RouteKind.ADAPT_TO_ENVIRONMENT:
                t0 = time.perf_counter()
                instruction = self.camera_adapt(controller.scene_description())
                emit("Camera", instruction.splitlines()[0], t0)

            t0 = time.perf_counter()
            new_ratings, new_params, warnings = self.retrieve_weights(
                instruction, spec, ratings)
            for w in warnings:
                emit("WeightRet", w, t0)
            weights = ratings_to_weights(new_ratings)
            candidate = compose_cost(spec.terms, weights, new_params,
                                     provenance=query.text)
            emit("WeightRet", ", ".join(
                f"{k}={v:g}" for k, v in sorted(weights.items())), t0)

            t0 = time.perf_counter()
            controller.apply(candidate, new_ratings)
            emit("Applied", candidate.digest(), t0)
        except (TransportError, PipelineError, CostRejected, AllZeroRatings,
                ValidationError, ParseError) as exc:
            emit("Rejected", f"{type(exc).__name__}: {exc}", time.perf_counter())
        return events
