"""Deterministic episode simulation.

Pedestrians follow a social-force model (goal attraction with exponential
repulsion from neighbors, the robot and corridor walls); the robot runs the
receding-horizon controller in a synchronous loop at the control period.
Timed query scripts retune the controller mid-episode through the assistant
pipeline.  Episodes are bit-reproducible for a given seed and backend.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assistants.pipeline import AssistantPipeline, ImportanceRatings, Query, \
    initial_ratings
from .costspec import CostSpec, default_path_spec
from .mpc import MpcConfig, NavController
from .world import ControlInput, Human, RobotState, Scenario, unicycle_step

__all__ = [
    "SocialForceParams",
    "Pedestrian",
    "StepRecord",
    "EpisodeRecord",
    "Metrics",
    "EpisodeConfig",
    "social_force_step",
    "spawn_pedestrians",
    "describe_scene",
    "run_episode",
    "compute_metrics",
    "run_batch",
    "BatchRow",
    "batch_to_csv",
    "batch_to_text",
]


@dataclass(frozen=True)
class SocialForceParams:
    desired_speed: float = 1.3
    relaxation_time: float = 0.5
    repulsion_strength: float = 2.0
    repulsion_range: float = 0.3
    wall_strength: float = 2.0
    wall_range: float = 0.3
    max_speed: float = 1.8

    def __post_init__(self) -> None:
        for name in ("desired_speed", "relaxation_time", "repulsion_strength",
                     "repulsion_range", "wall_strength", "wall_range",
                     "max_speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Pedestrian:
    id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    goal: tuple[float, float]
    desired_speed: float
    radius: float = 0.3

    def as_human(self) -> Human:
        return Human(self.id, self.position, self.velocity, self.radius)


_ARRIVAL_TOLERANCE = 0.3  # pedestrians stop once within this of their goal


def social_force_step(pedestrians, robot: Human | None, scenario: Scenario,
                      params: SocialForceParams, dt: float) -> list[Pedestrian]:
    """Advance all pedestrians one step with symplectic Euler."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    out: list[Pedestrian] = []
    for ped in pedestrians:
        p = np.asarray(ped.position)
        vel = np.asarray(ped.velocity)
        to_goal = np.asarray(ped.goal) - p
        dist_goal = float(np.linalg.norm(to_goal))
        if dist_goal > _ARRIVAL_TOLERANCE:
            desired = ped.desired_speed * to_goal / dist_goal
        else:
            desired = np.zeros(2)
        force = (desired - vel) / params.relaxation_time
        for other in pedestrians:
            if other.id == ped.id:
                continue
            force += _repulsion(p, np.asarray(other.position),
                                ped.radius + other.radius,
                                params.repulsion_strength,
                                params.repulsion_range)
        if robot is not None:
            force += _repulsion(p, np.asarray(robot.position),
                                ped.radius + robot.radius,
                                params.repulsion_strength,
                                params.repulsion_range)
        for hs in scenario.corridors:
            inside = hs.offset - (hs.normal[0] * p[0] + hs.normal[1] * p[1])
            magnitude = params.wall_strength * math.exp(
                (ped.radius - inside) / params.wall_range)
            force -= magnitude * np.asarray(hs.normal)
        vel = vel + force * dt
        speed = float(np.linalg.norm(vel))
        if speed > params.max_speed:
            vel = vel * (params.max_speed / speed)
        p = p + vel * dt
        out.append(replace(ped, position=(float(p[0]), float(p[1])),
                           velocity=(float(vel[0]), float(vel[1]))))
    return out


def _repulsion(p: np.ndarray, other: np.ndarray, r_sum: float,
               strength: float, rng: float) -> np.ndarray:
    delta = p - other
    d = float(np.linalg.norm(delta))
    if d < 1e-9:
        return np.zeros(2)
    return strength * math.exp((r_sum - d) / rng) * delta / d


def spawn_pedestrians(scenario: Scenario, seed: int,
                      jitter: float = 0.2) -> list[Pedestrian]:
    """Instantiate the scenario's pedestrians with seeded start jitter."""
    rng = np.random.default_rng(seed)
    peds = []
    for i, spawn in enumerate(scenario.humans_init):
        offset = rng.uniform(-jitter, jitter, size=2)
        speed_scale = rng.uniform(0.9, 1.1)
        pos = np.asarray(spawn.position) + offset
        for hs in scenario.corridors:  # keep spawns inside the walls
            margin = hs.signed_margin(pos, spawn.radius + 0.05)
            if margin > 0:
                pos -= margin * np.asarray(hs.normal)
        peds.append(Pedestrian(
            id=i,
            position=(float(pos[0]), float(pos[1])),
            velocity=(0.0, 0.0),
            goal=spawn.goal,
            desired_speed=spawn.desired_speed * speed_scale,
            radius=spawn.radius,
        ))
    return peds


def describe_scene(scenario: Scenario, pedestrians, robot: RobotState) -> str:
    """Textual scene description standing in for the onboard camera."""
    nearby = sum(
        1 for p in pedestrians
        if math.hypot(p.position[0] - robot.x, p.position[1] - robot.y) < 6.0
    )
    if scenario.corridors:
        if nearby == 0:
            return "confined corridor, no people nearby"
        if nearby >= 3:
            return "narrow corridor congested with pedestrians"
        return "corridor with several pedestrians approaching"
    if nearby == 0:
        return "open space, no people nearby"
    if nearby >= 4:
        return "dense crowd in open space"
    return "open space with several pedestrians walking"


# ---------------------------------------------------------------------------
# Episode loop


@dataclass(frozen=True)
class StepRecord:
    t: float
    robot: RobotState
    inp: ControlInput
    humans: tuple[Human, ...]
    spec_digest: str


@dataclass
class EpisodeRecord:
    steps: list[StepRecord]
    final_robot: RobotState
    final_humans: tuple[Human, ...]
    status: str  # GoalReached | Timeout | Collision
    seed: int
    events: list = field(default_factory=list)
    dt: float = 0.1


@dataclass(frozen=True)
class Metrics:
    collision: bool
    duration: float
    path_length: float
    min_human_distance: float
    mean_speed: float
    mean_abs_accel: float
    mean_abs_omega: float


@dataclass(frozen=True)
class EpisodeConfig:
    mpc: MpcConfig = field(default_factory=MpcConfig)
    social: SocialForceParams = field(default_factory=SocialForceParams)
    timeout: float = 60.0
    goal_tolerance: float = 0.3
    spawn_jitter: float = 0.2


class EpisodeController:
    """Adapter giving the assistant pipeline atomic access to the controller."""

    def __init__(self, nav: NavController, spec: CostSpec,
                 scenario: Scenario) -> None:
        self.nav = nav
        self.scenario = scenario
        self.ratings: ImportanceRatings = initial_ratings(spec)
        self.digest = spec.digest()
        self.pedestrians: list[Pedestrian] = []
        self.robot: RobotState = scenario.robot_start

    @property
    def spec(self) -> CostSpec:
        return self.nav.spec

    def apply(self, spec: CostSpec, ratings: ImportanceRatings) -> None:
        self.nav.swap_spec(spec)
        self.ratings = dict(ratings)
        self.digest = spec.digest()

    def scene_description(self) -> str:
        return describe_scene(self.scenario, self.pedestrians, self.robot)


def run_episode(scenario: Scenario, spec: CostSpec | None = None,
                script: list[tuple[float, str]] | None = None,
                config: EpisodeConfig | None = None, seed: int = 0,
                pipeline: AssistantPipeline | None = None) -> EpisodeRecord:
    """Run one closed-loop episode.

    `script` entries are (t_seconds, query_text) pairs fired through the
    pipeline once the simulation clock passes t_seconds.  Without a
    pipeline the script must be empty.
    """
    config = config or EpisodeConfig()
    spec = spec or default_path_spec()
    script = sorted(script or [], key=lambda item: item[0])
    if script and pipeline is None:
        raise ValueError("a query script requires an assistant pipeline")

    nav = NavController(scenario, spec, config.mpc)
    controller = EpisodeController(nav, spec, scenario)
    peds = spawn_pedestrians(scenario, seed, config.spawn_jitter)
    controller.pedestrians = peds

    dt = config.mpc.dt
    x = scenario.robot_start
    steps: list[StepRecord] = []
    events: list = []
    status = "Timeout"
    script_index = 0
    query_index = 0
    t = 0.0
    max_steps = int(round(config.timeout / dt))
    for step_index in range(max_steps):
        t = step_index * dt
        while script_index < len(script) and script[script_index][0] <= t:
            query = Query(script[script_index][1], received_at=t,
                          index=query_index)
            events.extend(pipeline.handle_query(query, controller))
            script_index += 1
            query_index += 1
        humans = tuple(p.as_human() for p in peds)
        controller.robot = x
        controller.pedestrians = peds
        inp, plan, rejected = nav.step(x, humans)
        if rejected:
            events.append(("CostRejectedDuringSolve", t))
        steps.append(StepRecord(t, x, inp, humans, controller.digest))
        x = unicycle_step(x, inp, dt)
        robot_disc = Human(-1, (x.x, x.y), (0.0, 0.0), scenario.robot_radius)
        peds = social_force_step(peds, robot_disc, scenario, config.social, dt)
        if _collided(x, peds, scenario.robot_radius):
            status = "Collision"
            break
        if math.hypot(x.x - scenario.goal[0],
                      x.y - scenario.goal[1]) <= config.goal_tolerance:
            status = "GoalReached"
            break
    return EpisodeRecord(
        steps=steps,
        final_robot=x,
        final_humans=tuple(p.as_human() for p in peds),
        status=status,
        seed=seed,
        events=events,
        dt=dt,
    )


def _collided(x: RobotState, pedestrians, robot_radius: float) -> bool:
    for p in pedestrians:
        if math.hypot(x.x - p.position[0], x.y - p.position[1]) \
                < robot_radius + p.radius:
            return True
    return False


def compute_metrics(record: EpisodeRecord,
                    subtract_radii: bool = False) -> Metrics:
    """Navigation metrics of one episode.

    Human distance is center-to-center by default; pass subtract_radii to
    get surface distance instead.
    """
    if not record.steps:
        raise ValueError("empty episode record")
    positions = np.array(
        [[s.robot.x, s.robot.y] for s in record.steps]
        + [[record.final_robot.x, record.final_robot.y]]
    )
    path_length = float(np.sum(np.linalg.norm(np.diff(positions, axis=0),
                                              axis=1)))
    duration = len(record.steps) * record.dt
    min_dist = math.inf
    for s in record.steps:
        for h in s.humans:
            d = math.hypot(s.robot.x - h.position[0], s.robot.y - h.position[1])
            if subtract_radii:
                d -= 0.3 + h.radius
            min_dist = min(min_dist, d)
    for h in record.final_humans:
        d = math.hypot(record.final_robot.x - h.position[0],
                       record.final_robot.y - h.position[1])
        if subtract_radii:
            d -= 0.3 + h.radius
        min_dist = min(min_dist, d)
    speeds = [abs(s.robot.v) for s in record.steps]
    accels = [abs(s.inp.a) for s in record.steps]
    omegas = [abs(s.inp.omega) for s in record.steps]
    return Metrics(
        collision=record.status == "Collision",
        duration=duration,
        path_length=path_length,
        min_human_distance=min_dist,
        mean_speed=float(np.mean(speeds)),
        mean_abs_accel=float(np.mean(accels)),
        mean_abs_omega=float(np.mean(omegas)),
    )


# ---------------------------------------------------------------------------
# Batches


@dataclass(frozen=True)
class BatchRow:
    label: str
    episodes: int
    collision_rate: float
    duration: tuple[float, float]  # (mean, std)
    path_length: tuple[float, float]
    min_human_distance: tuple[float, float]
    mean_speed: tuple[float, float]
    mean_abs_accel: tuple[float, float]
    mean_abs_omega: tuple[float, float]


def run_batch(scenario: Scenario, variants: list[tuple[str, list]],
              episodes: int, base_seed: int,
              pipeline_factory, config: EpisodeConfig | None = None,
              spec: CostSpec | None = None) -> list[BatchRow]:
    """Run `episodes` seeded episodes per variant and aggregate metrics.

    `pipeline_factory()` must return a fresh AssistantPipeline per episode
    so conversation state never leaks between runs.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    config = config or EpisodeConfig()
    rows = []
    for label, script in variants:
        metrics = []
        for i in range(episodes):
            record = run_episode(
                scenario, spec=spec, script=script, config=config,
                seed=base_seed + i, pipeline=pipeline_factory(),
            )
            metrics.append(compute_metrics(record))
        rows.append(_aggregate(label, metrics))
    return rows


def _aggregate(label: str, metrics: list[Metrics]) -> BatchRow:
    def stat(attr: str) -> tuple[float, float]:
        values = np.array([getattr(m, attr) for m in metrics])
        if not np.all(np.isfinite(values)):  # e.g. min distance with no humans
            return math.inf, 0.0
        return float(np.mean(values)), float(np.std(values))

    return BatchRow(
        label=label,
        episodes=len(metrics),
        collision_rate=float(np.mean([m.collision for m in metrics])),
        duration=stat("duration"),
        path_length=stat("path_length"),
        min_human_distance=stat("min_human_distance"),
        mean_speed=stat("mean_speed"),
        mean_abs_accel=stat("mean_abs_accel"),
        mean_abs_omega=stat("mean_abs_omega"),
    )


_CSV_COLUMNS = ["variant", "episodes", "collision_rate",
                "duration_mean", "duration_std",
                "path_length_mean", "path_length_std",
                "min_dist_mean", "min_dist_std",
                "speed_mean", "speed_std",
                "accel_mean", "accel_std",
                "omega_mean", "omega_std"]


def batch_to_csv(rows: list[BatchRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_COLUMNS)
    for r in rows:
        writer.writerow([
            r.label, r.episodes, f"{r.collision_rate:.3f}",
            f"{r.duration[0]:.3f}", f"{r.duration[1]:.3f}",
            f"{r.path_length[0]:.3f}", f"{r.path_length[1]:.3f}",
            f"{r.min_human_distance[0]:.3f}", f"{r.min_human_distance[1]:.3f}",
            f"{r.mean_speed[0]:.3f}", f"{r.mean_speed[1]:.3f}",
            f"{r.mean_abs_accel[0]:.3f}", f"{r.mean_abs_accel[1]:.3f}",
            f"{r.mean_abs_omega[0]:.3f}", f"{r.mean_abs_omega[1]:.3f}",
        ])
    return buffer.getvalue()


def batch_to_text(rows: list[BatchRow]) -> str:
    header = (f"{'variant':<44} {'col':>5} {'dur [s]':>13} {'len [m]':>13} "
              f"{'min d [m]':>13} {'v [m/s]':>13} {'a [m/s2]':>13} "
              f"{'w [rad/s]':>13}")
    lines = [header, "-" * len(header)]
    for r in rows:
        def ms(pair: tuple[float, float]) -> str:
            return f"{pair[0]:6.2f} ({pair[1]:4.2f})"

        lines.append(
            f"{r.label:<44} {r.collision_rate:>5.2f} {ms(r.duration):>13} "
            f"{ms(r.path_length):>13} {ms(r.min_human_distance):>13} "
            f"{ms(r.mean_speed):>13} {ms(r.mean_abs_accel):>13} "
            f"{ms(r.mean_abs_omega):>13}"
        )
    return "\n".join(lines)
