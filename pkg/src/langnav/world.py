"""Robot dynamics, humans, reference paths and scenarios.

Shared vocabulary for the solver, simulator and service: a second-order
unicycle robot, disc humans with constant-velocity prediction, polyline
reference paths and half-space corridor constraints.  All types are
immutable values and all operations are pure functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "RobotState",
    "ControlInput",
    "Human",
    "HumanPrediction",
    "ReferencePath",
    "HalfSpace",
    "Scenario",
    "ScenarioError",
    "wrap_angle",
    "unicycle_step",
    "predict_humans",
    "path_project",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "bundled_scenario_path",
]


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class RobotState:
    """Unicycle state: position [m], heading [rad], forward speed [m/s]."""

    x: float
    y: float
    theta: float
    v: float

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.v])


@dataclass(frozen=True)
class ControlInput:
    """Linear acceleration [m/s^2] and angular velocity [rad/s]."""

    a: float
    omega: float

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.omega])


@dataclass(frozen=True)
class Human:
    """Disc pedestrian with ground-truth velocity."""

    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    radius: float = 0.3

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"human {self.id}: radius must be > 0")


@dataclass(frozen=True)
class HumanPrediction:
    """Predicted positions for one human, one entry per stage k=0..N_k."""

    human_id: int
    positions: np.ndarray  # (N_k+1, 2)

    def __post_init__(self) -> None:
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (N_k+1, 2)")


class ReferencePath:
    """Polyline reference path with cumulative arc length per waypoint."""

    def __init__(self, waypoints) -> None:
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("need at least two 2-D waypoints")
        seg = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg, axis=1)
        if np.any(seg_len <= 0.0):
            raise ValueError("consecutive waypoints must not coincide")
        self.waypoints = pts
        self.segment_lengths = seg_len
        self.cumulative = np.concatenate([[0.0], np.cumsum(seg_len)])
        self._seg_start = pts[:-1]
        self._tangents = seg / seg_len[:, None]

    @property
    def total_length(self) -> float:
        return float(self.cumulative[-1])

    def __len__(self) -> int:
        return len(self.waypoints)

    def __eq__(self, other) -> bool:
        return isinstance(other, ReferencePath) and np.array_equal(
            self.waypoints, other.waypoints
        )


@dataclass(frozen=True)
class HalfSpace:
    """Linear constraint n . p <= b with unit normal n."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=float)
        norm = np.linalg.norm(n)
        if not 0.999 < norm < 1.001:
            raise ValueError(f"normal must be a unit vector, got |n|={norm:.4f}")
        object.__setattr__(self, "normal", (float(n[0] / norm), float(n[1] / norm)))

    def signed_margin(self, point, radius: float = 0.0) -> float:
        """n.p - b + radius; <= 0 when the disc is inside the half-space."""
        n = self.normal
        return n[0] * point[0] + n[1] * point[1] - self.offset + radius


@dataclass(frozen=True)
class HumanSpawn:
    """Initial condition for one simulated pedestrian."""

    position: tuple[float, float]
    goal: tuple[float, float]
    desired_speed: float
    radius: float = 0.3


class ScenarioError(ValueError):
    """Raised for structurally invalid or infeasible scenario definitions."""


@dataclass(frozen=True)
class Scenario:
    name: str
    robot_start: RobotState
    robot_radius: float
    goal: tuple[float, float]
    reference_path: ReferencePath
    humans_init: tuple[HumanSpawn, ...]
    corridors: tuple[HalfSpace, ...] = ()
    bounds: tuple[float, float, float, float] = (-10.0, 10.0, -10.0, 10.0)  # xmin,xmax,ymin,ymax

    def __post_init__(self) -> None:
        xmin, xmax, ymin, ymax = self.bounds
        gx, gy = self.goal
        if not (xmin <= gx <= xmax and ymin <= gy <= ymax):
            raise ScenarioError(f"goal {self.goal} outside workspace bounds {self.bounds}")
        p0 = (self.robot_start.x, self.robot_start.y)
        for hs in self.corridors:
            if hs.signed_margin(p0, self.robot_radius) >= 0.0:
                raise ScenarioError(
                    f"robot start {p0} not strictly feasible for corridor {hs}"
                )
        for spawn in self.humans_init:
            d = math.hypot(p0[0] - spawn.position[0], p0[1] - spawn.position[1])
            if d <= self.robot_radius + spawn.radius:
                raise ScenarioError(
                    f"robot start overlaps human spawned at {spawn.position}"
                )


def unicycle_step(state: RobotState, inp: ControlInput, dt: float) -> RobotState:
    """One explicit-Euler step of the second-order unicycle model.

    x' = x + dt v cos(theta), y' = y + dt v sin(theta),
    theta' = theta + dt omega (renormalized), v' = v + dt a.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    return RobotState(
        x=state.x + dt * state.v * math.cos(state.theta),
        y=state.y + dt * state.v * math.sin(state.theta),
        theta=wrap_angle(state.theta + dt * inp.omega),
        v=state.v + dt * inp.a,
    )


def predict_humans(humans, horizon: int, dt: float) -> list[HumanPrediction]:
    """Constant-velocity extrapolation over the MPC horizon, sorted by id."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    ks = np.arange(horizon + 1)[:, None] * dt
    out = []
    for h in sorted(humans, key=lambda h: h.id):
        pos = np.asarray(h.position, dtype=float)
        vel = np.asarray(h.velocity, dtype=float)
        out.append(HumanPrediction(h.id, pos[None, :] + ks * vel[None, :]))
    return out


def path_project(path: ReferencePath, point):
    """Euclidean projection of a point onto the polyline.

    Returns (s, closest, tangent, normal): the arc-length parameter of the
    projection, the closest point, the unit tangent of the winning segment
    and that tangent rotated +90 degrees.  Ties between equidistant segments
    go to the lower-s segment.
    """
    s_arr, closest, tangent = _project_many(path, np.asarray(point, dtype=float)[None, :])
    t = tangent[0]
    normal = np.array([-t[1], t[0]])
    return float(s_arr[0]), closest[0], t, normal


def _project_many(path: ReferencePath, points: np.ndarray):
    """Vectorized polyline projection for an (M, 2) array of points."""
    a = path._seg_start  # (S, 2)
    t = path._tangents  # (S, 2)
    lens = path.segment_lengths  # (S,)
    # raw projection parameter per segment, clamped into the segment
    proj_raw = points @ t.T - np.sum(a * t, axis=1)[None, :]  # (M, S)
    proj = np.clip(proj_raw, 0.0, lens[None, :])
    # |p - foot|^2 without materializing the (M, S, 2) foot array
    rel2 = (
        np.sum(points * points, axis=1)[:, None]
        + np.sum(a * a, axis=1)[None, :]
        - 2.0 * points @ a.T
    )
    d2 = rel2 - proj * (2.0 * proj_raw - proj)
    best = np.argmin(d2, axis=1)  # first minimum = lower-s segment
    rows = np.arange(points.shape[0])
    pb = proj[rows, best]
    s = path.cumulative[best] + pb
    foot = a[best] + pb[:, None] * t[best]
    return s, foot, t[best]


def point_at_arc_length(path: ReferencePath, s: float) -> np.ndarray:
    """Point on the polyline at arc length s (clamped to [0, total])."""
    s = min(max(s, 0.0), path.total_length)
    idx = int(np.searchsorted(path.cumulative, s, side="right") - 1)
    idx = min(idx, len(path.segment_lengths) - 1)
    return path._seg_start[idx] + (s - path.cumulative[idx]) * path._tangents[idx]


# ---------------------------------------------------------------------------
# Scenario (de)serialization


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        rs = doc["robot_start"]
        start = RobotState(
            x=float(rs["x"]), y=float(rs["y"]),
            theta=float(rs.get("theta", 0.0)), v=float(rs.get("v", 0.0)),
        )
        humans = tuple(
            HumanSpawn(
                position=tuple(h["position"]),
                goal=tuple(h["goal"]),
                desired_speed=float(h["desired_speed"]),
                radius=float(h.get("radius", 0.3)),
            )
            for h in doc.get("humans", [])
        )
        corridors = tuple(
            HalfSpace(normal=tuple(c["normal"]), offset=float(c["offset"]))
            for c in doc.get("corridors", [])
        )
        bounds = doc["bounds"]
        return Scenario(
            name=str(doc.get("name", "unnamed")),
            robot_start=start,
            robot_radius=float(doc.get("robot_radius", 0.3)),
            goal=tuple(doc["goal"]),
            reference_path=ReferencePath(doc["reference_path"]["waypoints"]),
            humans_init=humans,
            corridors=corridors,
            bounds=(
                float(bounds["xmin"]), float(bounds["xmax"]),
                float(bounds["ymin"]), float(bounds["ymax"]),
            ),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "robot_start": {
            "x": sc.robot_start.x, "y": sc.robot_start.y,
            "theta": sc.robot_start.theta, "v": sc.robot_start.v,
        },
        "robot_radius": sc.robot_radius,
        "goal": list(sc.goal),
        "reference_path": {"waypoints": sc.reference_path.waypoints.tolist()},
        "humans": [
            {
                "position": list(h.position), "goal": list(h.goal),
                "desired_speed": h.desired_speed, "radius": h.radius,
            }
            for h in sc.humans_init
        ],
        "corridors": [
            {"normal": list(c.normal), "offset": c.offset} for c in sc.corridors
        ],
        "bounds": {
            "xmin": sc.bounds[0], "xmax": sc.bounds[1],
            "ymin": sc.bounds[2], "ymax": sc.bounds[3],
        },
    }


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. 'corridor', 'open')."""
    base = resources.files("langnav").joinpath("data/scenarios")
    candidate = base.joinpath(f"{name}.json")
    with resources.as_file(candidate) as p:
        if not p.exists():
            raise ScenarioError(f"no bundled scenario named {name!r}")
        return p


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a JSON file path or a bundled scenario name."""
    path = Path(source)
    if not path.exists() and not str(source).endswith(".json"):
        path = bundled_scenario_path(str(source))
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {source}")
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
