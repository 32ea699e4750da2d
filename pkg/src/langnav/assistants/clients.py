"""Language-model client backends.

Three interchangeable implementations of the LlmClient protocol: a
deterministic keyword-rule mock, a fixture replay client, and a live
chat-completions HTTP client.  The pipeline only ever sees `send`.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Protocol

__all__ = [
    "LlmClient",
    "TransportError",
    "MockBackend",
    "ReplayBackend",
    "RecordingClient",
    "LiveBackend",
    "message_digest",
]

Conversation = list[tuple[str, str]]  # (role, content)


class TransportError(RuntimeError):
    """The backend could not produce a response."""


class LlmClient(Protocol):
    def send(self, system_prompt: str, conversation: Conversation,
             user_message: str) -> str: ...

    def reset(self) -> None: ...


def message_digest(system_prompt: str, conversation: Conversation,
                   user_message: str) -> str:
    parts = [system_prompt] + [f"{r}\x1f{c}" for r, c in conversation] + [user_message]
    return hashlib.sha256("\x1e".join(parts).encode()).hexdigest()[:24]


def _role_of(system_prompt: str) -> str:
    first = system_prompt.splitlines()[0] if system_prompt else ""
    if first.startswith("# role:"):
        return first.split(":", 1)[1].strip()
    return "unknown"


def _scan_line(user_message: str, tag: str) -> str:
    for line in user_message.splitlines():
        if line.startswith(tag):
            return line[len(tag):].strip()
    return ""


def _scan_kv(user_message: str, tag: str) -> dict[str, float]:
    raw = _scan_line(user_message, tag)
    out: dict[str, float] = {}
    for chunk in raw.split(","):
        if "=" in chunk:
            k, v = chunk.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError:
                pass
    return out


_NUMBER_M = re.compile(r"(\d+(?:\.\d+)?)\s*(?:m\b|meter|metre)")
_NUMBER_WORDS = {"one": 1.0, "two": 2.0, "three": 3.0, "four": 4.0, "five": 5.0}


def _distance_in(text: str) -> float | None:
    m = _NUMBER_M.search(text)
    if m:
        return float(m.group(1))
    for word, value in _NUMBER_WORDS.items():
        if re.search(rf"\b{word}\b\s+(?:m\b|meter|metre)", text):
            return value
    return None


class MockBackend:
    """Deterministic keyword-rule stand-in for the live model.

    Responses follow the same line-oriented schema the assistants prompt
    for, so the pipeline parses mock and live output identically.  An
    optional artificial latency mimics remote round-trip times.
    """

    def __init__(self, latency: float = 0.0) -> None:
        self.latency = latency

    def reset(self) -> None:
        pass

    def send(self, system_prompt: str, conversation: Conversation,
             user_message: str) -> str:
        if self.latency > 0:
            time.sleep(self.latency)
        role = _role_of(system_prompt)
        if role == "capability":
            return self._capability(user_message)
        if role == "costgen":
            return self._costgen(user_message)
        if role == "camera":
            return self._camera(user_message)
        if role == "weights":
            return self._weights(user_message)
        raise TransportError(f"mock has no rules for role {role!r}")

    # -- capability routing ------------------------------------------------

    @staticmethod
    def _wants_safe_distance(q: str) -> bool:
        if "maximize" in q or "minimize" in q:
            return False  # explicit objectives, not a clearance requirement
        return ("safe distance" in q
                or ("distance" in q and ("human" in q or "pedestrian" in q
                                         or "people" in q))
                or "keep" in q and "m from" in q)

    def _capability(self, user_message: str) -> str:
        q = _scan_line(user_message, "QUERY:").lower()
        terms = {t.strip() for t in _scan_line(user_message, "TERMS:").split(",")}
        params = _scan_kv(user_message, "PARAMS:")
        if any(w in q for w in ("adapt", "environment", "perceive",
                                "surroundings", "look around")):
            return ("DECISION: adapt_to_environment\n"
                    "REASON: the query asks the robot to sense its surroundings")
        if self._wants_safe_distance(q):
            satisfied = "d_safe" in params
        elif "follow" in q and ("human" in q or "pedestrian" in q or "person" in q):
            satisfied = "follow_human" in terms
        elif "path" in q:
            satisfied = "contour" in terms and "lag" in terms
        elif "goal" in q:
            satisfied = "goal" in terms
        else:
            satisfied = True  # behavior-only query
        if satisfied:
            return ("DECISION: update_parameters\n"
                    "REASON: the active cost already covers the requested task")
        return ("DECISION: generate_new_cost\n"
                "REASON: no current term covers the requested task")

    # -- cost generation ---------------------------------------------------

    _SAFE_DISTANCE_EXPR = (
        "if_else((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2, 0, "
        "((oh_x - px)^2 + (oh_y - py)^2 - d_safe^2)^2)"
    )
    _FOLLOW_EXPR = "(oh_x - px)^2 + (oh_y - py)^2"
    _AVOID_EXPR = "1 / ((oh_x - px)^2 + (oh_y - py)^2 + eps)"

    def _costgen(self, user_message: str) -> str:
        q = _scan_line(user_message, "QUERY:").lower()
        lines: list[str] = []
        wants_path = "path" in q
        wants_goal = "goal" in q
        if self._wants_safe_distance(q):
            if wants_path:
                lines += ["TERM: contour = builtin:contour",
                          "TERM: lag = builtin:lag"]
            else:
                lines += ["TERM: goal = builtin:goal"]
            lines += [f"TERM: safe_distance = expr:{self._SAFE_DISTANCE_EXPR}"]
            d = _distance_in(q) or 1.0
            lines += [f"PARAM: d_safe = {d} tunable m"]
        elif "maximize" in q and "distance" in q:
            lines += [f"TERM: avoid_human = expr:{self._AVOID_EXPR}",
                      "PARAM: eps = 0.01 fixed m^2"]
        elif ("minimize" in q and "distance" in q) or (
                "follow" in q and ("human" in q or "pedestrian" in q)):
            lines += [f"TERM: follow_human = expr:{self._FOLLOW_EXPR}"]
        elif wants_path:
            lines += ["TERM: contour = builtin:contour",
                      "TERM: lag = builtin:lag"]
        elif wants_goal:
            lines += ["TERM: goal = builtin:goal"]
        else:
            lines += ["TERM: goal = builtin:goal"]
        lines += [
            "TERM: velocity = builtin:velocity",
            "TERM: accel = builtin:accel",
            "TERM: omega = builtin:omega",
            "REASON: quadratic terms for the requested task plus the "
            "mandatory input and velocity penalties",
        ]
        return "\n".join(lines)

    # -- camera ------------------------------------------------------------

    def _camera(self, user_message: str) -> str:
        scene = _scan_line(user_message, "SCENE:").lower()
        empty = any(w in scene for w in ("no people", "no humans", "empty"))
        crowded = not empty and any(
            w in scene for w in ("congest", "crowd", "pedestrian", "people",
                                 "busy"))
        confined = any(w in scene for w in ("confined", "corridor", "narrow",
                                            "hallway"))
        open_space = "open" in scene
        if confined and not crowded and empty:
            return ("- confined corridor with no people: keep tight to the "
                    "reference path\n"
                    "- hold the reference speed\n"
                    "REASON: empty confined space rewards accurate tracking")
        if confined and crowded:
            return ("- narrow pathway with human congestion: keep path "
                    "tracking high\n"
                    "- reduce speed emphasis around people\n"
                    "- prefer careful smooth inputs\n"
                    "REASON: narrow crowded space demands careful motion")
        if crowded and open_space:
            return ("- dense crowd in open space: relax strict path tracking\n"
                    "- reduce speed emphasis around people\n"
                    "- prioritize smooth careful motion\n"
                    "REASON: open crowded space rewards flexibility")
        return ("- maintain moderate speed and smooth inputs\n"
                "REASON: unremarkable scene")

    # -- weight retrieval ----------------------------------------------------

    _CAMERA_TABLES = [
        (("confined corridor", "no people"),
         {"contour": 8, "lag": 8, "velocity": 6, "accel": 6, "omega": 7}),
        (("narrow pathway", "congestion"),
         {"contour": 8, "lag": 8, "velocity": 4, "accel": 7, "omega": 6}),
        (("dense crowd", "open space"),
         {"contour": 6, "lag": 6, "velocity": 4, "accel": 7, "omega": 7}),
    ]

    def _weights(self, user_message: str) -> str:
        instruction = _scan_line(user_message, "INSTRUCTION:").lower()
        terms = [t.strip() for t in
                 _scan_line(user_message, "TERMS:").split(",") if t.strip()]
        ratings = {k: int(v) for k, v in _scan_kv(user_message, "RATINGS:").items()}
        params = _scan_kv(user_message, "PARAMS:")
        z = {t: ratings.get(t, 5) for t in terms}
        new_params: dict[str, float] = {}

        for markers, table in self._CAMERA_TABLES:
            if all(m in instruction for m in markers):
                for name, value in table.items():
                    if name in z:
                        z[name] = value
                return self._weights_response(z, new_params, "camera guidance")

        def bump(name: str, delta: int) -> None:
            if name in z:
                z[name] = max(0, min(10, z[name] + delta))

        v_ref = params.get("v_ref", 1.5)
        fast = any(w in instruction for w in ("faster", "quick", "fast as",
                                              "speed up", "factory", "hurry"))
        careful = any(w in instruction for w in ("careful", "hospital",
                                                 "gentle", "cautious"))
        slow = any(w in instruction for w in ("slower", "slow down"))
        if fast:
            new_params["v_ref"] = round(v_ref * 1.5, 3)
            bump("velocity", 2)
        if careful:
            new_params["v_ref"] = round(v_ref * 0.6, 3)
            bump("accel", 3)
            bump("omega", 3)
            bump("velocity", -1)
        elif slow:
            new_params["v_ref"] = round(v_ref * 0.7, 3)
        if "smooth" in instruction:
            bump("accel", 3)
            bump("omega", 3)
        if "stick to the path" in instruction or "stick to path" in instruction:
            bump("contour", 3)
            bump("lag", 3)
        if "rotat" in instruction or "turn more" in instruction:
            bump("omega", -3)
        if "safe distance" in instruction or (
                "distance" in instruction and
                ("human" in instruction or "pedestrian" in instruction
                 or "people" in instruction)):
            if "d_safe" in params:
                d = _distance_in(instruction)
                new_params["d_safe"] = d if d is not None else round(
                    params["d_safe"] * 1.5, 3)
            for t in terms:
                if "safe" in t or "avoid" in t:
                    z[t] = 10
            bump("contour", -4)
            bump("lag", -4)
        return self._weights_response(z, new_params, "keyword rules")

    @staticmethod
    def _weights_response(z: dict[str, int], params: dict[str, float],
                          why: str) -> str:
        lines = [f"RATING {name} = {value}" for name, value in z.items()]
        lines += [f"PARAM {name} = {value}" for name, value in params.items()]
        lines.append(f"REASON: {why}")
        return "\n".join(lines)


class ReplayBackend:
    """Replays recorded responses keyed by a digest of the full request."""

    def __init__(self, fixture_dir: str | Path) -> None:
        self.fixture_dir = Path(fixture_dir)

    def reset(self) -> None:
        pass

    def send(self, system_prompt: str, conversation: Conversation,
             user_message: str) -> str:
        digest = message_digest(system_prompt, conversation, user_message)
        path = self.fixture_dir / f"{digest}.txt"
        if not path.exists():
            raise TransportError(f"no recorded response for digest {digest}")
        return path.read_text(encoding="utf-8")


class RecordingClient:
    """Wraps another client, recording responses as replay fixtures."""

    def __init__(self, inner, fixture_dir: str | Path) -> None:
        self.inner = inner
        self.fixture_dir = Path(fixture_dir)
        self.fixture_dir.mkdir(parents=True, exist_ok=True)

    def reset(self) -> None:
        self.inner.reset()

    def send(self, system_prompt: str, conversation: Conversation,
             user_message: str) -> str:
        response = self.inner.send(system_prompt, conversation, user_message)
        digest = message_digest(system_prompt, conversation, user_message)
        (self.fixture_dir / f"{digest}.txt").write_text(response,
                                                        encoding="utf-8")
        return response


class LiveBackend:
    """Chat-completions HTTP client.

    Reads LLM_BASE_URL and LLM_API_KEY from the environment unless given
    explicitly; the model name comes from configuration.
    """

    def __init__(self, model: str | None = None, base_url: str | None = None,
                 api_key: str | None = None, timeout: float = 30.0) -> None:
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL")
                         or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.model = model or os.environ.get("LLM_MODEL", "gpt-4o-mini")
        self.timeout = timeout
        if not self.api_key:
            raise TransportError("LLM_API_KEY is not set")

    def reset(self) -> None:
        pass

    def send(self, system_prompt: str, conversation: Conversation,
             user_message: str) -> str:
        messages = [{"role": "system", "content": system_prompt}]
        messages += [{"role": r, "content": c} for r, c in conversation]
        messages.append({"role": "user", "content": user_message})
        body = json.dumps({"model": self.model, "messages": messages,
                           "temperature": 0.0}).encode()
        request = urllib.request.Request(
            f"{self.base_url}/chat/completions",
            data=body,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self.api_key}",
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode())
            return payload["choices"][0]["message"]["content"]
        except (urllib.error.URLError, KeyError, IndexError,
                json.JSONDecodeError) as exc:
            raise TransportError(f"chat completion failed: {exc}") from exc
